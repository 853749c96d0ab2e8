#pragma once

#include <filesystem>
#include <string>

#include "wbk/error.hpp"
#include "wbk/grid.hpp"

namespace wbk {

enum class PgmErrorCode { Format, Truncated, Maxval, Io };

class PgmError : public Error {
 public:
  PgmError(PgmErrorCode code, const std::string& what) : Error(ErrorKind::Data, what), code_(code) {}
  PgmErrorCode code() const noexcept { return code_; }

 private:
  PgmErrorCode code_;
};

// Binary P5 with maxval 255. Values are mapped v -> round(255 * v) after
// clamping to [0, 1]; reading divides by 255.
std::string encode_pgm(const Grid& g);
Grid decode_pgm(const std::string& bytes);

void write_pgm(const std::filesystem::path& path, const Grid& g);
Grid read_pgm(const std::filesystem::path& path);

}  // namespace wbk
