#include "unroll/data_io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "unroll/errors.hpp"

namespace unroll {

void SyntheticSpec::validate() const {
    if (signal_dim == 0 || measurement_dim == 0) throw PreconditionViolated("synthetic spec: empty dims");
    if (sparsity < 1 || sparsity > signal_dim)
        throw PreconditionViolated("synthetic spec: sparsity must be in [1, N]");
    if (measurement_dim > signal_dim)
        throw PreconditionViolated("synthetic spec: n must be <= N");
    if (m_train == 0) throw PreconditionViolated("synthetic spec: m_train must be >= 1");
}

Matrix normalize_measurement(const Matrix& a) {
    const double s = spectral_norm(a);
    if (s == 0.0) throw PreconditionViolated("normalize_measurement: zero matrix");
    return scale(a, 0.99 / s);
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SeededRng rng(spec.seed);
    const std::size_t n = spec.measurement_dim, big_n = spec.signal_dim;
    const std::size_t m = spec.m_train + spec.m_test;

    Dataset d;
    d.a = normalize_measurement(random_gaussian_matrix(rng, n, big_n));
    d.phi0 = spec.dict_kind == DictKind::Orthogonal ? random_orthogonal(rng, big_n)
                                                    : random_gaussian_matrix(rng, big_n, big_n);

    d.x = Matrix(big_n, m);
    std::vector<std::size_t> pool(big_n);
    std::vector<double> z(big_n);
    for (std::size_t c = 0; c < m; ++c) {
        // Support: Fisher-Yates prefix of size s. Amplitudes: standard normal.
        for (std::size_t i = 0; i < big_n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < spec.sparsity; ++i) {
            const std::size_t k = i + static_cast<std::size_t>(rng.next_below(big_n - i));
            std::swap(pool[i], pool[k]);
        }
        std::fill(z.begin(), z.end(), 0.0);
        for (std::size_t i = 0; i < spec.sparsity; ++i) z[pool[i]] = rng.next_gaussian();
        for (std::size_t r = 0; r < big_n; ++r) {
            double s = 0.0;
            for (std::size_t k = 0; k < big_n; ++k) s += (*d.phi0)(r, k) * z[k];
            d.x(r, c) = s;
        }
    }
    d.y = matmul(d.a, d.x);
    return d;
}

double input_radius(const Matrix& y, std::size_t m_train) {
    double best = 0.0;
    for (std::size_t j = 0; j < std::min(m_train, y.cols); ++j)
        best = std::max(best, col_norm2(y, j));
    return best;
}

namespace {

std::uint32_t read_be32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw TruncatedFile(std::string("idx: truncated while reading ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace

IdxTensor load_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx: cannot open " + path);
    unsigned char magic[4];
    if (!in.read(reinterpret_cast<char*>(magic), 4)) throw TruncatedFile("idx: truncated magic");
    if (magic[0] != 0 || magic[1] != 0) throw BadMagic("idx: bad magic prefix");
    if (magic[2] != 0x08)
        throw UnsupportedTypeCode("idx: only unsigned byte (0x08) payloads are supported");
    const std::size_t ndim = magic[3];

    IdxTensor t;
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        const std::uint32_t d = read_be32(in, "dimension");
        t.dims.push_back(d);
        total *= d;
    }
    t.payload.resize(total);
    if (!in.read(reinterpret_cast<char*>(t.payload.data()), static_cast<std::streamsize>(total)))
        throw TruncatedFile("idx: payload shorter than dimensions promise");
    return t;
}

void write_idx(const std::string& path, const IdxTensor& tensor) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("idx: cannot open " + path + " for writing");
    const unsigned char magic[4] = {0, 0, 0x08, static_cast<unsigned char>(tensor.dims.size())};
    out.write(reinterpret_cast<const char*>(magic), 4);
    for (std::size_t d : tensor.dims) {
        const unsigned char b[4] = {static_cast<unsigned char>((d >> 24) & 0xFF),
                                    static_cast<unsigned char>((d >> 16) & 0xFF),
                                    static_cast<unsigned char>((d >> 8) & 0xFF),
                                    static_cast<unsigned char>(d & 0xFF)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    out.write(reinterpret_cast<const char*>(tensor.payload.data()),
              static_cast<std::streamsize>(tensor.payload.size()));
    if (!out) throw IoError("idx: write failed for " + path);
}

Dataset mnist_dataset(const IdxTensor& images, const Matrix& a, std::size_t max_m) {
    if (images.dims.size() != 3) throw DimensionMismatch("mnist: expected [m, rows, cols] tensor");
    const std::size_t count = images.dims[0];
    const std::size_t pixels = images.dims[1] * images.dims[2];
    if (images.payload.size() != count * pixels) throw DimensionMismatch("mnist: payload size off");
    if (a.cols != pixels) throw DimensionMismatch("mnist: measurement matrix must have r*c columns");

    const std::size_t m = std::min(max_m, count);
    Dataset d;
    d.a = a;
    d.x = Matrix(pixels, m);
    for (std::size_t c = 0; c < m; ++c)
        for (std::size_t i = 0; i < pixels; ++i)
            d.x(i, c) = static_cast<double>(images.payload[c * pixels + i]) / 255.0;
    d.y = matmul(d.a, d.x);
    return d;
}

const char* const kResultsHeader =
    "scenario,N,n,s,p,kernel_len,L,J,K,m_train,m_test,seed,trial,epochs,lr,r1,r2,"
    "train_mse,test_mse,train_l2,test_l2,ge_signed,ge_abs,alpha,alpha_mode,b_inf,d_inf,w_inf,"
    "y_fro,KL,ML,OL,QL,rad_bound,bound_thm1,bound_cor1,runtime_s";

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("csv: cannot open " + path + " for writing");
    out << kResultsHeader << "\n";
    for (const ResultRow& r : rows) {
        out << r.scenario << "," << r.n_signal << "," << r.n_meas << "," << r.sparsity << ","
            << r.p_dict << "," << r.kernel_len << "," << r.depth << "," << r.j_spaces << ","
            << r.k_total << "," << r.m_train << "," << r.m_test << "," << r.seed << "," << r.trial
            << "," << r.epochs << "," << format_double(r.lr) << "," << format_double(r.r1) << ","
            << format_double(r.r2) << "," << format_double(r.train_mse) << ","
            << format_double(r.test_mse) << "," << format_double(r.train_l2) << ","
            << format_double(r.test_l2) << "," << format_double(r.ge_signed) << ","
            << format_double(r.ge_abs) << "," << format_double(r.alpha) << "," << r.alpha_mode << ","
            << format_double(r.b_inf) << "," << format_double(r.d_inf) << ","
            << format_double(r.w_inf) << "," << format_double(r.y_fro) << ","
            << format_double(r.k_l) << "," << format_double(r.m_l) << "," << format_double(r.o_l)
            << "," << format_double(r.q_l) << "," << format_double(r.rad_bound) << ","
            << format_double(r.bound_thm1) << "," << format_double(r.bound_cor1) << ","
            << format_double(r.runtime_s) << "\n";
    }
    if (!out) throw IoError("csv: write failed for " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

double parse_double(const std::string& s) { return std::strtod(s.c_str(), nullptr); }
std::size_t parse_size(const std::string& s) { return static_cast<std::size_t>(std::strtoull(s.c_str(), nullptr, 10)); }

}  // namespace

std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaMismatch("csv: missing header in " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kResultsHeader) throw SchemaMismatch("csv: header does not match results schema");

    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> c = split_csv_line(line);
        if (c.size() != 37) throw SchemaMismatch("csv: expected 37 columns, got " + std::to_string(c.size()));
        ResultRow r;
        r.scenario = c[0];
        r.n_signal = parse_size(c[1]);
        r.n_meas = parse_size(c[2]);
        r.sparsity = parse_size(c[3]);
        r.p_dict = parse_size(c[4]);
        r.kernel_len = parse_size(c[5]);
        r.depth = parse_size(c[6]);
        r.j_spaces = parse_size(c[7]);
        r.k_total = parse_size(c[8]);
        r.m_train = parse_size(c[9]);
        r.m_test = parse_size(c[10]);
        r.seed = std::strtoull(c[11].c_str(), nullptr, 10);
        r.trial = parse_size(c[12]);
        r.epochs = parse_size(c[13]);
        r.lr = parse_double(c[14]);
        r.r1 = parse_double(c[15]);
        r.r2 = parse_double(c[16]);
        r.train_mse = parse_double(c[17]);
        r.test_mse = parse_double(c[18]);
        r.train_l2 = parse_double(c[19]);
        r.test_l2 = parse_double(c[20]);
        r.ge_signed = parse_double(c[21]);
        r.ge_abs = parse_double(c[22]);
        r.alpha = parse_double(c[23]);
        r.alpha_mode = c[24];
        r.b_inf = parse_double(c[25]);
        r.d_inf = parse_double(c[26]);
        r.w_inf = parse_double(c[27]);
        r.y_fro = parse_double(c[28]);
        r.k_l = parse_double(c[29]);
        r.m_l = parse_double(c[30]);
        r.o_l = parse_double(c[31]);
        r.q_l = parse_double(c[32]);
        r.rad_bound = parse_double(c[33]);
        r.bound_thm1 = parse_double(c[34]);
        r.bound_cor1 = parse_double(c[35]);
        r.runtime_s = parse_double(c[36]);
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw TruncatedFile("dataset: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

void write_colmajor(std::ostream& out, const Matrix& m) {
    // Doubles are written via their IEEE-754 bits, little-endian.
    for (std::size_t j = 0; j < m.cols; ++j)
        for (std::size_t i = 0; i < m.rows; ++i) {
            std::uint64_t bits;
            const double v = m(i, j);
            std::memcpy(&bits, &v, 8);
            write_u64_le(out, bits);
        }
}

Matrix read_colmajor(std::istream& in, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t i = 0; i < rows; ++i) {
            const std::uint64_t bits = read_u64_le(in);
            double v;
            std::memcpy(&v, &bits, 8);
            m(i, j) = v;
        }
    return m;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("dataset: cannot open " + path + " for writing");
    write_u64_le(out, data.a.rows);
    write_u64_le(out, data.a.cols);
    write_u64_le(out, data.x.rows);
    write_u64_le(out, data.x.cols);
    write_u64_le(out, data.y.rows);
    write_u64_le(out, data.y.cols);
    write_colmajor(out, data.a);
    write_colmajor(out, data.x);
    write_colmajor(out, data.y);
    if (!out) throw IoError("dataset: write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("dataset: cannot open " + path);
    const std::uint64_t ar = read_u64_le(in), ac = read_u64_le(in);
    const std::uint64_t xr = read_u64_le(in), xc = read_u64_le(in);
    const std::uint64_t yr = read_u64_le(in), yc = read_u64_le(in);
    Dataset d;
    d.a = read_colmajor(in, ar, ac);
    d.x = read_colmajor(in, xr, xc);
    d.y = read_colmajor(in, yr, yc);
    return d;
}

}  // namespace unroll
