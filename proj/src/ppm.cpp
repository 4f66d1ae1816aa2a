#include "srmmd/ppm.hpp"

#include <fstream>

namespace srmmd {

namespace {

[[noreturn]] void parse_error(const std::string& path, std::streamoff offset, const std::string& what) {
  throw std::runtime_error("PPM parse error in " + path + " at byte " + std::to_string(offset) + ": " + what);
}

// Reads the next header token, skipping whitespace and '#' comment lines.
std::string next_token(std::istream& in, const std::string& path) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF) parse_error(path, in.tellg(), "unexpected end of header");
  while (c != EOF && !std::isspace(c) && c != '#') {
    token.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (c != EOF) in.unget();  // the terminator is the single separator before pixel data
  return token;
}

long parse_positive(const std::string& token, std::istream& in, const std::string& path, const char* what) {
  try {
    std::size_t pos = 0;
    const long value = std::stol(token, &pos);
    if (pos != token.size() || value <= 0) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    parse_error(path, in.tellg(), std::string("invalid ") + what + " '" + token + "'");
  }
}

}  // namespace

PpmImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open PPM file: " + path);

  const std::string magic = next_token(in, path);
  if (magic != "P6") parse_error(path, in.tellg(), "expected magic 'P6', got '" + magic + "'");

  PpmImage image;
  image.width = parse_positive(next_token(in, path), in, path, "width");
  image.height = parse_positive(next_token(in, path), in, path, "height");
  const long maxval = parse_positive(next_token(in, path), in, path, "maxval");
  if (maxval != 255) {
    throw std::runtime_error("unsupported PPM format in " + path + ": maxval " + std::to_string(maxval) +
                             " (only 255 is supported)");
  }
  // Exactly one whitespace byte separates the header from the pixel data.
  const int sep = in.get();
  if (sep == EOF || !std::isspace(sep)) parse_error(path, in.tellg(), "missing whitespace after maxval");

  const std::size_t byte_count = static_cast<std::size_t>(3 * image.width * image.height);
  image.pixels.resize(byte_count);
  in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(byte_count));
  if (static_cast<std::size_t>(in.gcount()) != byte_count) {
    parse_error(path, static_cast<std::streamoff>(in.gcount()),
                "truncated pixel data (expected " + std::to_string(byte_count) + " bytes, got " +
                    std::to_string(in.gcount()) + ")");
  }
  return image;
}

void write_ppm(const PpmImage& image, const std::string& path) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(3 * image.width * image.height)) {
    throw std::invalid_argument("PPM image dimensions and pixel buffer disagree");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open PPM file for writing: " + path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("failed writing PPM data to " + path);
}

}  // namespace srmmd
