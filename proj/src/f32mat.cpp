#include "unimatch/error.hpp"
#include "unimatch/f32mat.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <vector>

namespace unimatch {

namespace {

static_assert(std::numeric_limits<float>::is_iec559 && std::numeric_limits<double>::is_iec559);

template <typename T>
T from_le(const unsigned char* bytes)
{
    std::array<unsigned char, sizeof(T)> buf;
    std::memcpy(buf.data(), bytes, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    T value;
    std::memcpy(&value, buf.data(), sizeof(T));
    return value;
}

template <typename T>
void to_le(T value, unsigned char* bytes)
{
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
}

template <typename Scalar>
Mat read_block(std::istream& in, const char (&magic)[5], const std::string& origin)
{
    unsigned char header[16];
    if (!in.read(reinterpret_cast<char*>(header), 16)) {
        throw Error(ErrorCode::FormatError, origin + ": truncated header");
    }
    if (std::memcmp(header, magic, 4) != 0) {
        throw Error(ErrorCode::FormatError, origin + ": bad magic, expected " + std::string(magic));
    }
    const auto rows = from_le<std::uint32_t>(header + 4);
    const auto cols = from_le<std::uint32_t>(header + 8);
    const auto reserved = from_le<std::uint32_t>(header + 12);
    if (reserved != 0) throw Error(ErrorCode::FormatError, origin + ": reserved header field is not zero");

    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> payload(count * sizeof(Scalar));
    if (count > 0 && !in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()))) {
        throw Error(ErrorCode::FormatError, origin + ": truncated payload");
    }
    Mat values(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) {
            const std::size_t offset = (static_cast<std::size_t>(r) * cols + c) * sizeof(Scalar);
            values(r, c) = static_cast<double>(from_le<Scalar>(payload.data() + offset));
        }
    }
    return values;
}

template <typename Scalar>
void write_block(std::ostream& out, const Mat& values, const char (&magic)[5])
{
    if (values.rows() > std::numeric_limits<std::uint32_t>::max() ||
        values.cols() > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::FormatError, "matrix too large for F32MAT");
    }
    unsigned char header[16];
    std::memcpy(header, magic, 4);
    to_le<std::uint32_t>(static_cast<std::uint32_t>(values.rows()), header + 4);
    to_le<std::uint32_t>(static_cast<std::uint32_t>(values.cols()), header + 8);
    to_le<std::uint32_t>(0, header + 12);
    out.write(reinterpret_cast<const char*>(header), 16);

    std::vector<unsigned char> payload(static_cast<std::size_t>(values.size()) * sizeof(Scalar));
    std::size_t offset = 0;
    for (Index r = 0; r < values.rows(); ++r) {
        for (Index c = 0; c < values.cols(); ++c) {
            to_le<Scalar>(static_cast<Scalar>(values(r, c)), payload.data() + offset);
            offset += sizeof(Scalar);
        }
    }
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed");
}

} // namespace

Mat read_f32mat(std::istream& in, const std::string& origin)
{
    return read_block<float>(in, "F32M", origin);
}

Mat read_f32mat(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    Mat values = read_f32mat(in, path.string());
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::FormatError, path.string() + ": trailing bytes after payload");
    }
    return values;
}

void write_f32mat(std::ostream& out, const Mat& values)
{
    write_block<float>(out, values, "F32M");
}

void write_f32mat(const std::filesystem::path& path, const Mat& values)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    write_f32mat(out, values);
}

Mat read_f64mat(std::istream& in, const std::string& origin)
{
    return read_block<double>(in, "F64M", origin);
}

void write_f64mat(std::ostream& out, const Mat& values)
{
    write_block<double>(out, values, "F64M");
}

Mat round_to_f32(const Mat& values)
{
    return values.cast<float>().cast<double>();
}

} // namespace unimatch
