#include "wbk/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace wbk {

std::string encode_pgm(const Grid& g) {
  if (g.empty()) throw Error(ErrorKind::Data, "cannot encode an empty grid");
  std::string out = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
  out.reserve(out.size() + g.size());
  for (float v : g.data) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  return out;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments, then reads a decimal field.
  long field(const char* what) {
    for (;;) {
      while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
      if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    if (pos_ >= bytes_.size()) throw PgmError(PgmErrorCode::Truncated, std::string("pgm: header ends before ") + what);
    if (!std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      throw PgmError(PgmErrorCode::Format, std::string("pgm: malformed ") + what);
    }
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) throw PgmError(PgmErrorCode::Format, std::string("pgm: ") + what + " out of range");
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size()) throw PgmError(PgmErrorCode::Truncated, "pgm: missing raster");
    if (!std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw PgmError(PgmErrorCode::Format, "pgm: no separator after maxval");
    }
    return pos_ + 1;
  }

  std::size_t pos_ = 2;

 private:
  const std::string& bytes_;
};

}  // namespace

Grid decode_pgm(const std::string& bytes) {
  if (bytes.size() < 2) throw PgmError(PgmErrorCode::Format, "pgm: file too short for a magic number");
  if (bytes[0] != 'P' || bytes[1] != '5') throw PgmError(PgmErrorCode::Format, "pgm: expected binary P5 magic");
  HeaderReader hr(bytes);
  const long w = hr.field("width");
  const long h = hr.field("height");
  const long maxval = hr.field("maxval");
  if (w <= 0 || h <= 0) throw PgmError(PgmErrorCode::Format, "pgm: zero dimension");
  if (maxval != 255) throw PgmError(PgmErrorCode::Maxval, "pgm: maxval " + std::to_string(maxval) + " is not 255");
  const std::size_t start = hr.raster_start();
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - start < need) {
    throw PgmError(PgmErrorCode::Truncated, "pgm: payload has " + std::to_string(bytes.size() - start) +
                                                " bytes, expected " + std::to_string(need));
  }
  Grid g(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t k = 0; k < need; ++k) {
    g.data[k] = static_cast<float>(static_cast<unsigned char>(bytes[start + k])) / 255.0f;
  }
  return g;
}

void write_pgm(const std::filesystem::path& path, const Grid& g) {
  const std::string bytes = encode_pgm(g);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw PgmError(PgmErrorCode::Io, "pgm: cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw PgmError(PgmErrorCode::Io, "pgm: write failed for " + path.string());
}

Grid read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PgmError(PgmErrorCode::Io, "pgm: cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_pgm(ss.str());
}

}  // namespace wbk
