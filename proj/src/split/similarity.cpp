#include <bit>
#include <cctype>

#include "voxgrid/errors.hpp"
#include "voxgrid/splitter.hpp"

namespace voxgrid::split {

Fingerprint Fingerprint::from_hex(std::string_view hex) {
  Fingerprint fp(hex.size() * 4);
  for (std::size_t n = 0; n < hex.size(); ++n) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(hex[n])));
    int v;
    if (c >= '0' && c <= '9') {
      v = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      v = c - 'a' + 10;
    } else {
      throw ArgumentError("invalid hex digit '" + std::string(1, hex[n]) + "' in fingerprint");
    }
    // Nibble n covers bits [width - 4(n+1), width - 4n).
    const std::size_t low = fp.width_ - 4 * (n + 1);
    for (int b = 0; b < 4; ++b) {
      if (v >> b & 1) fp.set(low + b);
    }
  }
  return fp;
}

Fingerprint Fingerprint::from_bits(std::size_t width, std::initializer_list<std::size_t> bits) {
  Fingerprint fp(width);
  for (auto b : bits) fp.set(b);
  return fp;
}

void Fingerprint::set(std::size_t bit) {
  if (bit >= width_) throw ArgumentError("fingerprint bit " + std::to_string(bit) + " out of range");
  words_[bit / 64] |= std::uint64_t{1} << (bit % 64);
}

bool Fingerprint::test(std::size_t bit) const {
  return bit < width_ && (words_[bit / 64] >> (bit % 64) & 1);
}

std::size_t Fingerprint::count() const {
  std::size_t c = 0;
  for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

std::string Fingerprint::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (std::size_t n = 0; n < width_ / 4; ++n) {
    const std::size_t low = width_ - 4 * (n + 1);
    int v = 0;
    for (int b = 0; b < 4; ++b) v |= (test(low + b) ? 1 : 0) << b;
    out.push_back(kDigits[v]);
  }
  return out;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.width() != b.width()) {
    throw ArgumentError("fingerprint widths differ: " + std::to_string(a.width()) + " vs " +
                        std::to_string(b.width()));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t w = 0; w < a.words().size(); ++w) {
    inter += static_cast<std::size_t>(std::popcount(a.words()[w] & b.words()[w]));
    uni += static_cast<std::size_t>(std::popcount(a.words()[w] | b.words()[w]));
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace voxgrid::split
