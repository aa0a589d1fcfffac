#pragma once

// Deterministic bag-of-words text embedding. Each lower-cased alphanumeric
// token hashes (FNV-1a) to a seed for a unit Gaussian vector; the prompt
// embedding is the L2-normalized sum. Stands in for a frozen text encoder.

#include <cctype>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "hb/rng.hpp"
#include "hb/tensor.hpp"

namespace hb {

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

template <class T = float>
Tensor<T> embed_text(std::string_view text, std::size_t dim, std::uint64_t seed = 0) {
  std::vector<double> acc(dim, 0.0);
  for (const auto& tok : tokenize(text)) {
    Rng rng(mix_seed(seed, fnv1a(tok)));
    for (auto& v : acc) v += rng.normal();
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  Tensor<T> out({dim});
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<T>(norm > 0 ? acc[i] / norm : 0.0);
  return out;
}

}  // namespace hb
