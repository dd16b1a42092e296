#include <png.h>

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "splitnet/error.hpp"
#include "splitnet/field.hpp"

namespace splitnet {

namespace {

constexpr unsigned char kMagic[4] = {'S', 'P', 'L', 'F'};
constexpr std::size_t kHeaderSize = 4 + 2 + 4 * 4;

template <class U>
void put_le(std::vector<unsigned char>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <class U>
U get_le(std::span<const unsigned char> in, std::size_t pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in[pos + i]) << (8 * i);
  return v;
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Netpbm header token, skipping whitespace and '#' comments.
std::string pnm_token(const std::vector<unsigned char>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') tok += static_cast<char>(buf[pos++]);
  if (tok.empty()) throw IoError("truncated netpbm header");
  return tok;
}

Field read_pnm(const std::vector<unsigned char>& buf, const std::string& path) {
  std::size_t pos = 0;
  const std::string magic = pnm_token(buf, pos);
  const bool ascii = magic == "P2" || magic == "P3";
  const int channels = (magic == "P3" || magic == "P6") ? 3 : 1;
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6")
    throw IoError("'" + path + "' is not a PGM/PPM file");
  const int cols = std::stoi(pnm_token(buf, pos));
  const int rows = std::stoi(pnm_token(buf, pos));
  const int maxval = std::stoi(pnm_token(buf, pos));
  if (maxval != 255) throw IoError("'" + path + "': only 8-bit netpbm images are supported");
  Field f(GridSpec{1, rows, cols, 1.0}, channels);
  const std::size_t count = static_cast<std::size_t>(rows) * cols * channels;
  std::vector<int> samples;
  samples.reserve(count);
  if (ascii) {
    for (std::size_t i = 0; i < count; ++i) samples.push_back(std::stoi(pnm_token(buf, pos)));
  } else {
    ++pos;  // single whitespace after maxval
    if (buf.size() < pos + count) throw IoError("'" + path + "': truncated pixel data");
    for (std::size_t i = 0; i < count; ++i) samples.push_back(buf[pos + i]);
  }
  // netpbm interleaves channels per pixel
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int ch = 0; ch < channels; ++ch)
        f.at(ch, r, c) = samples[(static_cast<std::size_t>(r) * cols + c) * channels + ch] / 255.0;
  return f;
}

Field read_png_file(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot decode PNG '" + path + "': " + image.message);
  const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = colour ? 3 : 1;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG '" + path + "': " + image.message);
  }
  const int rows = static_cast<int>(image.height);
  const int cols = static_cast<int>(image.width);
  Field f(GridSpec{1, rows, cols, 1.0}, channels);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int ch = 0; ch < channels; ++ch)
        f.at(ch, r, c) = buf[(static_cast<std::size_t>(r) * cols + c) * channels + ch] / 255.0;
  return f;
}

}  // namespace

std::vector<unsigned char> encode_field(const Field& f) {
  std::vector<unsigned char> out;
  out.reserve(kHeaderSize + f.values.size() * 8);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint16_t>(out, kFieldFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.level));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.channels));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.rows));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.cols));
  for (double v : f.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Field decode_field(std::span<const unsigned char> bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError("not a field blob (bad magic)");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kFieldFormatVersion)
    throw UnsupportedVersion("unsupported field blob version " + std::to_string(version));
  const auto level = get_le<std::uint32_t>(bytes, 6);
  const auto channels = get_le<std::uint32_t>(bytes, 10);
  const auto rows = get_le<std::uint32_t>(bytes, 14);
  const auto cols = get_le<std::uint32_t>(bytes, 18);
  if (channels == 0 || rows == 0 || cols == 0) throw IoError("field blob has an empty dimension");
  const std::size_t count = static_cast<std::size_t>(channels) * rows * cols;
  if (bytes.size() != kHeaderSize + count * 8) throw IoError("field blob size does not match header");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i)
    values[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, kHeaderSize + 8 * i));
  // the blob does not carry h; level j implies h_j = 2^{j-1}
  const double step = level > 0 ? std::ldexp(1.0, static_cast<int>(level) - 1) : 1.0;
  return Field(GridSpec{static_cast<int>(level), static_cast<int>(rows), static_cast<int>(cols), step},
               static_cast<int>(channels), std::move(values));
}

void write_field(const std::string& path, const Field& f) {
  const auto bytes = encode_field(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

Field read_field(const std::string& path) {
  const auto bytes = slurp(path);
  try {
    return decode_field(bytes);
  } catch (const UnsupportedVersion& e) {
    throw UnsupportedVersion("'" + path + "': " + e.what());
  } catch (const IoError& e) {
    throw IoError("'" + path + "': " + e.what());
  }
}

Field read_image(const std::string& path) {
  const auto buf = slurp(path);
  if (buf.size() >= 8 && png_sig_cmp(buf.data(), 0, 8) == 0) return read_png_file(path);
  if (buf.size() >= 2 && buf[0] == 'P') return read_pnm(buf, path);
  throw IoError("'" + path + "' is neither PNG nor PGM/PPM");
}

void write_png(const std::string& path, const Field& f) {
  if (f.channels != 1 && f.channels != 3) throw ValidationError("PNG export needs 1 or 3 channels");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(f.grid.cols);
  image.height = static_cast<png_uint_32>(f.grid.rows);
  image.format = f.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(static_cast<std::size_t>(f.grid.rows) * f.grid.cols * f.channels);
  for (int r = 0; r < f.grid.rows; ++r)
    for (int c = 0; c < f.grid.cols; ++c)
      for (int ch = 0; ch < f.channels; ++ch) {
        const double v = std::clamp(f.at(ch, r, c), 0.0, 1.0);
        buf[(static_cast<std::size_t>(r) * f.grid.cols + c) * f.channels + ch] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + image.message);
}

}  // namespace splitnet
