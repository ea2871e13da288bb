#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "frwkv/harness.hpp"

FRWKV_BEGIN_NAMESPACE

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      if (!tok.empty()) break;
    } else {
      tok.push_back(static_cast<char>(ch));
    }
    ch = in.get();
  }
  return tok;
}

int header_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = header_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw std::runtime_error("ppm: malformed header in " + path.string());
  }
  return std::stoi(tok);
}

std::uint8_t to_byte(Real v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ppm: cannot open " + path.string());
  if (header_token(in) != "P6") throw std::runtime_error("ppm: " + path.string() + " is not a binary P6 file");
  const int w = header_int(in, path);
  const int h = header_int(in, path);
  const int maxval = header_int(in, path);
  if (w < 1 || h < 1 || maxval != 255) {
    throw std::runtime_error("ppm: unsupported geometry or maxval in " + path.string());
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw std::runtime_error("ppm: truncated pixel data in " + path.string());
  std::vector<Real> data(raw.size());
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) data[c * plane + p] = static_cast<Real>(raw[p * 3 + c]) / Real(255);
  }
  return Tensor::from_data(Shape{1, 3, h, w}, std::move(data));
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  const Shape& s = image.shape();
  if (s.rank() != 4 || s.n() != 1 || s.c() != 3) throw std::invalid_argument("ppm: expected a 1,3,H,W image, got " + s.str());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("ppm: cannot write " + path.string());
  out << "P6\n" << s.w() << " " << s.h() << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(s.w()) * s.h();
  std::vector<std::uint8_t> raw(plane * 3);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) raw[p * 3 + c] = to_byte(image.data()[c * plane + p]);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("ppm: write failed for " + path.string());
}

Tensor quantize_8bit(const Tensor& image) {
  std::vector<Real> q(image.data().begin(), image.data().end());
  for (Real& v : q) v = static_cast<Real>(to_byte(v)) / Real(255);
  return Tensor::from_data(image.shape(), std::move(q));
}

FRWKV_END_NAMESPACE
