#include <cctype>
#include <cmath>

#include "culturecraft/gateway.hpp"
#include "culturecraft/text.hpp"

namespace culturecraft::gateway {

namespace {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

constexpr double kWordWeight = 1.0;
constexpr double kTrigramWeight = 0.5;

}  // namespace

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

LocalHashEmbedder::LocalHashEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

EmbeddingVector LocalHashEmbedder::embed(std::string_view text) {
  if (text.empty()) throw EmbeddingError("cannot embed empty text");
  EmbeddingVector v;
  v.values.assign(dimension_, 0.0);
  auto add = [&](std::string_view feature, double weight) {
    v.values[text::fnv1a(feature) % dimension_] += weight;
  };

  const auto tokens = tokenize(text);
  for (const auto& token : tokens) {
    add("w:" + token, kWordWeight);
    const std::string padded = "<" + token + ">";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      add("t:" + padded.substr(i, 3), kTrigramWeight);
    }
  }
  if (tokens.empty()) add("raw:" + std::string(text), kWordWeight);

  double norm = 0.0;
  for (double x : v.values) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v.values) x /= norm;
  return v;
}

}  // namespace culturecraft::gateway
