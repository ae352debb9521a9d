#include "charphish/encoder.hpp"

#include <stdexcept>

namespace charphish {

char Alphabet::symbol(int index) {
  if (index < 1 || index > kSize) {
    throw std::out_of_range("alphabet index out of range: " + std::to_string(index));
  }
  return static_cast<char>(index + 0x1f);
}

std::string Alphabet::symbols() {
  std::string s;
  s.reserve(kSize);
  for (int i = 1; i <= kSize; ++i) s.push_back(symbol(i));
  return s;
}

std::array<float, 2> one_hot(Label label) {
  return label == Label::kClean ? std::array<float, 2>{1.0f, 0.0f}
                                : std::array<float, 2>{0.0f, 1.0f};
}

EncodedEmail encode(std::string_view text, int t_max) {
  if (t_max < 1) throw std::invalid_argument("encode: T must be >= 1");
  EncodedEmail out;
  out.indices.assign(static_cast<size_t>(t_max), 0);
  const size_t n = std::min(text.size(), static_cast<size_t>(t_max));
  for (size_t i = 0; i < n; ++i) {
    out.indices[i] = Alphabet::index_of(text[i]);
  }
  out.original_length = static_cast<int>(n);
  return out;
}

std::string decode(const std::vector<int>& indices) {
  std::string s;
  s.reserve(indices.size());
  for (int idx : indices) {
    if (idx < 0 || idx > Alphabet::kSize) {
      throw std::out_of_range("decode: index out of range: " + std::to_string(idx));
    }
    if (idx != Alphabet::kPadIndex) s.push_back(Alphabet::symbol(idx));
  }
  return s;
}

}  // namespace charphish
