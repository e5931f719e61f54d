#include "baq/packfmt.hpp"

#include "baq/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <system_error>

namespace baq {

namespace {

constexpr char kLayerMagic[4] = {'B', 'A', 'Q', 'T'};
constexpr char kPackedMagic[4] = {'B', 'A', 'Q', 'P'};

class ByteWriter {
public:
    explicit ByteWriter(std::size_t reserve) { bytes_.reserve(reserve); }

    void magic(const char (&m)[4]) { bytes_.insert(bytes_.end(), m, m + 4); }

    void u32(std::uint32_t v) {
        for (int k = 0; k < 4; ++k) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
        }
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    void byte(std::uint8_t b) { bytes_.push_back(b); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void expect_magic(const char (&m)[4]) {
        need(4, "magic");
        if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) {
            throw Error(ErrorKind::BadMagic, std::string("expected '") + std::string(m, 4) + "'");
        }
        pos_ += 4;
    }

    std::uint32_t u32(const char * what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + k]) << (8 * k);
        }
        pos_ += 4;
        return v;
    }

    float f32(const char * what) { return std::bit_cast<float>(u32(what)); }

    std::span<const std::uint8_t> take(std::size_t n, const char * what) {
        need(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char * what) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorKind::TruncatedPayload,
                        std::string("file ends inside ") + what + " (" + std::to_string(bytes_.size()) + " bytes)");
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void check_version(std::uint32_t v) {
    if (v != kFormatVersion) {
        throw Error(ErrorKind::BadVersion, "unsupported version " + std::to_string(v));
    }
}

std::uint32_t checked_u32(std::size_t v, const char * what) {
    if (v > 0xffffffffu) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " does not fit in 32 bits");
    }
    return static_cast<std::uint32_t>(v);
}

float exact_f32(double v, const char * what) {
    const float f = static_cast<float>(v);
    if (static_cast<double>(f) != v) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " is not representable as a 32-bit float");
    }
    return f;
}

std::size_t column_code_bytes(std::size_t rows, int bits) {
    return (rows * static_cast<std::size_t>(bits) + 7) / 8;
}

} // namespace

std::vector<std::uint8_t> encode_layer(const Matrix & m) {
    ByteWriter out(kFixedHeaderBytes + 4 * m.size());
    out.magic(kLayerMagic);
    out.u32(kFormatVersion);
    out.u32(checked_u32(m.rows(), "row count"));
    out.u32(checked_u32(m.cols(), "column count"));
    for (double v : m.data()) {
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::InvalidArgument, "layer tensor values must be finite");
        }
        out.f32(static_cast<float>(v));
    }
    return out.take();
}

Matrix decode_layer(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic(kLayerMagic);
    check_version(in.u32("version"));
    const std::size_t rows = in.u32("row count");
    const std::size_t cols = in.u32("column count");
    if (in.remaining() / 4 < rows * cols) {
        throw Error(ErrorKind::TruncatedPayload,
                    "payload holds " + std::to_string(in.remaining()) + " bytes, expected " +
                        std::to_string(4 * rows * cols));
    }
    std::vector<double> data(rows * cols);
    for (double & v : data) {
        v = in.f32("payload");
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::InvalidArgument, "layer tensor contains a non-finite value");
        }
    }
    if (in.remaining() != 0) {
        throw Error(ErrorKind::InvalidArgument, std::to_string(in.remaining()) + " trailing bytes after payload");
    }
    return Matrix(rows, cols, std::move(data));
}

void write_layer(const std::filesystem::path & path, const Matrix & m) {
    write_file_atomic(path, encode_layer(m));
}

Matrix read_layer(const std::filesystem::path & path) {
    return decode_layer(read_file(path));
}

std::size_t width_header_bytes(std::size_t cols) {
    return (cols + 1) / 2;
}

std::size_t packed_size_bytes(std::size_t rows, std::span<const int> per_column_bits) {
    std::size_t total = kFixedHeaderBytes + 8 * rows + width_header_bytes(per_column_bits.size());
    for (int b : per_column_bits) {
        total += column_code_bytes(rows, b);
    }
    return total;
}

double code_bits_per_weight(std::size_t file_bytes, std::size_t rows, std::size_t cols) {
    const std::size_t overhead = kFixedHeaderBytes + 8 * rows + width_header_bytes(cols);
    if (rows == 0 || cols == 0 || file_bytes < overhead) {
        return 0.0;
    }
    return 8.0 * static_cast<double>(file_bytes - overhead) / static_cast<double>(rows * cols);
}

std::vector<std::uint8_t> pack_quantized(const QuantizedLayer & q) {
    const std::size_t m = q.rows;
    const std::size_t n = q.cols;
    if (q.codes.size() != m * n || q.per_column_bits.size() != n || q.row_min.size() != m ||
        q.row_max.size() != m) {
        throw Error(ErrorKind::DimensionMismatch, "quantized layer has inconsistent shapes");
    }
    for (int b : q.per_column_bits) {
        if (b < 0 || b > 15) {
            throw Error(ErrorKind::InvalidArgument, "width " + std::to_string(b) + " does not fit a 4-bit header");
        }
    }

    ByteWriter out(packed_size_bytes(m, q.per_column_bits));
    out.magic(kPackedMagic);
    out.u32(kFormatVersion);
    out.u32(checked_u32(m, "row count"));
    out.u32(checked_u32(n, "column count"));
    for (std::size_t i = 0; i < m; ++i) {
        out.f32(exact_f32(q.row_min[i], "row minimum"));
        out.f32(exact_f32(q.row_max[i], "row maximum"));
    }
    for (std::size_t j = 0; j < n; j += 2) {
        const auto lo = static_cast<std::uint8_t>(q.per_column_bits[j]);
        const auto hi = j + 1 < n ? static_cast<std::uint8_t>(q.per_column_bits[j + 1]) : std::uint8_t{0};
        out.byte(static_cast<std::uint8_t>(lo | (hi << 4)));
    }
    for (std::size_t j = 0; j < n; ++j) {
        const int bits = q.per_column_bits[j];
        if (bits == 0) {
            for (std::size_t i = 0; i < m; ++i) {
                if (q.codes[i * n + j] != 0) {
                    throw Error(ErrorKind::CodeOverflow, "nonzero code in zero-width column " + std::to_string(j));
                }
            }
            continue;
        }
        std::uint32_t acc = 0;
        int filled = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const std::uint32_t code = q.codes[i * n + j];
            if (code >> bits) {
                throw Error(ErrorKind::CodeOverflow, "code " + std::to_string(code) + " at (" + std::to_string(i) +
                                                         ", " + std::to_string(j) + ") exceeds " +
                                                         std::to_string(bits) + " bits");
            }
            acc = (acc << bits) | code;
            filled += bits;
            while (filled >= 8) {
                filled -= 8;
                out.byte(static_cast<std::uint8_t>(acc >> filled));
            }
            acc &= (std::uint32_t{1} << filled) - 1;
        }
        if (filled > 0) {
            out.byte(static_cast<std::uint8_t>(acc << (8 - filled)));
        }
    }
    return out.take();
}

QuantizedLayer unpack_quantized(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic(kPackedMagic);
    check_version(in.u32("version"));
    QuantizedLayer q;
    q.rows = in.u32("row count");
    q.cols = in.u32("column count");
    const std::size_t m = q.rows;
    const std::size_t n = q.cols;

    if (in.remaining() / 8 < m) {
        throw Error(ErrorKind::TruncatedPayload, "file ends inside the row bounds");
    }
    q.row_min.resize(m);
    q.row_max.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        q.row_min[i] = in.f32("row bounds");
        q.row_max[i] = in.f32("row bounds");
        if (!std::isfinite(q.row_min[i]) || !std::isfinite(q.row_max[i]) || !(q.row_min[i] <= q.row_max[i])) {
            throw Error(ErrorKind::InvalidRange, "row " + std::to_string(i) + " has invalid bounds");
        }
    }

    auto header = in.take(width_header_bytes(n), "width headers");
    q.per_column_bits.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::uint8_t b = header[j / 2];
        q.per_column_bits[j] = (j % 2 == 0) ? (b & 0x0f) : (b >> 4);
    }

    q.codes.assign(m * n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        const int bits = q.per_column_bits[j];
        auto col = in.take(column_code_bytes(m, bits), "code payload");
        std::size_t bitpos = 0;
        for (std::size_t i = 0; i < m && bits > 0; ++i) {
            std::uint32_t code = 0;
            for (int k = 0; k < bits; ++k, ++bitpos) {
                const std::uint32_t bit = (col[bitpos / 8] >> (7 - bitpos % 8)) & 1u;
                code = (code << 1) | bit;
            }
            q.codes[i * n + j] = static_cast<std::uint16_t>(code);
        }
    }
    if (in.remaining() != 0) {
        throw Error(ErrorKind::InvalidArgument, std::to_string(in.remaining()) + " trailing bytes after code payload");
    }

    q.dequantized = dequantize(m, n, q.codes, q.per_column_bits, q.row_min, q.row_max);
    return q;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) {
        throw Error(ErrorKind::Io, "read failed for '" + path.string() + "'");
    }
    return bytes;
}

void write_file_atomic(const std::filesystem::path & path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw Error(ErrorKind::Io, "cannot create '" + tmp.string() + "'");
        }
        f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorKind::Io, "cannot move '" + tmp.string() + "' into place");
    }
}

} // namespace baq
