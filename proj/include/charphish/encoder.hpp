#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace charphish {

enum class Label : int { kClean = 0, kPhishing = 1 };

// Fixed 95-symbol alphabet: printable ASCII 0x20..0x7E in codepoint order.
// Index 0 is shared by padding and out-of-alphabet characters, so the
// embedding table stays at 96 rows.
class Alphabet {
 public:
  static constexpr int kSize = 95;
  static constexpr int kPadIndex = 0;
  static constexpr char kFirst = 0x20;
  static constexpr char kLast = 0x7e;

  // 1..95 for in-alphabet characters, 0 otherwise.
  static int index_of(char c) {
    auto u = static_cast<unsigned char>(c);
    return (u >= 0x20 && u <= 0x7e) ? static_cast<int>(u) - 0x1f : 0;
  }

  // Inverse of index_of for indices in 1..95. Throws on out-of-range input.
  static char symbol(int index);

  // The 95 symbols in index order, used in checkpoint headers.
  static std::string symbols();
};

struct EncodedEmail {
  std::vector<int> indices;            // length exactly T
  std::array<float, 2> label_onehot{}; // clean -> [1,0], phishing -> [0,1]
  int original_length = 0;             // min(|text|, T)
  std::string email_id;
};

std::array<float, 2> one_hot(Label label);

// Pads with zeros / truncates to exactly t_max indices.
EncodedEmail encode(std::string_view text, int t_max);

// Index 0 decodes to nothing. Throws std::out_of_range on indices > 95 or < 0.
std::string decode(const std::vector<int>& indices);

}  // namespace charphish
