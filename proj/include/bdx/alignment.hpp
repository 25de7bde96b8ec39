#pragma once

// Alignment layer: the pre-trained classifier's two linear maps followed by a
// bias-free map whose rows start out as the token embeddings of each class's
// fault description. Output is a (tau x hidden) vibration word embedding.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "bdx/fcn.hpp"
#include "bdx/nn/checkpoint.hpp"
#include "bdx/text.hpp"

namespace bdx {

/// Tokenizer plus embedding table.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<int> tokenize(std::string_view text) const = 0;
  /// (tokens.size() x hidden())
  virtual nn::Tensor embed(std::span<const int> tokens) const = 0;
  virtual std::size_t hidden() const = 0;
  virtual int pad_token() const = 0;
};

/// Whitespace tokenizer over a fixed vocabulary with seeded, frozen embeddings.
/// Token 0 is padding, token 1 is the unknown word.
class ToyEmbeddingProvider final : public EmbeddingProvider {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;

  ToyEmbeddingProvider(std::size_t hidden, std::vector<std::string> vocab, std::uint64_t seed)
      : hidden_(hidden), table_({vocab.size() + 2, hidden}) {
    require(hidden >= 1, ErrorKind::Config, "embedding hidden size must be >= 1");
    for (std::size_t i = 0; i < vocab.size(); ++i) ids_.emplace(text::lower(vocab[i]), static_cast<int>(i + 2));
    nn::UniformStream rs(rng::derive(seed, {0x656d62}));
    for (auto& v : table_.values()) v = rs.uniform(-1.0, 1.0);
  }

  std::vector<int> tokenize(std::string_view s) const override {
    std::vector<int> out;
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      std::size_t j = i;
      while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j > i) {
        auto it = ids_.find(text::lower(s.substr(i, j - i)));
        out.push_back(it == ids_.end() ? kUnknown : it->second);
      }
      i = j;
    }
    return out;
  }

  nn::Tensor embed(std::span<const int> tokens) const override {
    nn::Tensor out({tokens.size(), hidden_});
    for (std::size_t r = 0; r < tokens.size(); ++r) {
      const auto id = static_cast<std::size_t>(tokens[r]);
      require(id < table_.dim(0), ErrorKind::Bounds, "token id out of range");
      std::copy_n(&table_.at(id, 0), hidden_, &out.at(r, 0));
    }
    return out;
  }

  std::size_t hidden() const override { return hidden_; }
  int pad_token() const override { return kPad; }
  const nn::Tensor& table() const { return table_; }

  /// Words of the default fault descriptions plus a few common ones.
  static std::vector<std::string> default_vocabulary() {
    return {"normal", "bearing", "without", "fault", "of", "minor", "moderate", "severe",
            "inner", "outer", "ring", "ball", "the", "a", "in", "condition", "healthy", "state"};
  }

 private:
  std::size_t hidden_;
  nn::Tensor table_;
  std::map<std::string, int, std::less<>> ids_;
};

/// One description per class, in class order.
struct FaultDescriptionSet {
  std::vector<std::string> texts;

  static FaultDescriptionSet defaults() {
    FaultDescriptionSet d;
    d.texts.push_back("normal bearing without fault");
    for (int label = 1; label < kFaultClasses; ++label)
      d.texts.push_back(std::string(severity_name(fault_severity(label))) + " fault of bearing " +
                        location_name(fault_location(label)));
    return d;
  }

  /// UTF-8 text, one description per line.
  static FaultDescriptionSet load(const std::filesystem::path& path) {
    FaultDescriptionSet d;
    for (auto& l : text::lines(io::read_text(path))) d.texts.push_back(text::trim(l));
    d.validate();
    return d;
  }

  void validate() const {
    require(!texts.empty(), ErrorKind::Config, "no fault descriptions");
    for (std::size_t i = 0; i < texts.size(); ++i)
      require(!text::trim(texts[i]).empty(), ErrorKind::Config, "fault description " + std::to_string(i) + " is empty");
  }

  std::size_t size() const { return texts.size(); }
};

/// (classes x tau*hidden): row k is description k tokenized, cut or padded to tau
/// tokens, embedded, and flattened row-major.
inline nn::Tensor init_l3(const FaultDescriptionSet& descriptions, const EmbeddingProvider& provider, std::size_t tau) {
  require(tau >= 1, ErrorKind::Config, "tau must be >= 1");
  descriptions.validate();
  const std::size_t h = provider.hidden();
  nn::Tensor w({descriptions.size(), tau * h});
  for (std::size_t k = 0; k < descriptions.size(); ++k) {
    std::vector<int> tokens = provider.tokenize(descriptions.texts[k]);
    require(!tokens.empty(), ErrorKind::Config, "fault description " + std::to_string(k) + " has no tokens");
    tokens.resize(tau, provider.pad_token());
    nn::Tensor e = provider.embed(tokens);
    std::copy_n(e.data(), tau * h, &w.at(k, 0));
  }
  return w;
}

class AlignmentLayer {
 public:
  AlignmentLayer(nn::Linear l1, nn::Linear l2, nn::Tensor l3_weight, std::size_t tau, std::size_t hidden)
      : l1_(std::move(l1)), l2_(std::move(l2)), l3_("alignment.l3.weight", {1, 1}), tau_(tau), hidden_(hidden) {
    require(l3_weight.rank() == 2 && l3_weight.dim(1) == tau * hidden, ErrorKind::Shape,
            "l3 weight must be (classes, tau*hidden)");
    require(l2_.out_features() == l3_weight.dim(0), ErrorKind::Config,
            "l2 output width " + std::to_string(l2_.out_features()) + " differs from l3 rows " +
                std::to_string(l3_weight.dim(0)));
    l3_.value = std::move(l3_weight);
    l3_.grad = nn::Tensor(l3_.value.shape());
  }

  std::size_t tau() const { return tau_; }
  std::size_t hidden() const { return hidden_; }
  const nn::Linear& l1() const { return l1_; }
  const nn::Linear& l2() const { return l2_; }
  nn::Linear& l1() { return l1_; }
  nn::Linear& l2() { return l2_; }
  const nn::Tensor& l3() const { return l3_.value; }

  /// Classifier-path output P = l2(relu(l1(features))), (B, classes).
  nn::Tensor logits(const nn::Tensor& features) const {
    require(features.rank() == 2 && features.dim(1) == l1_.in_features(), ErrorKind::Shape,
            "alignment features must be (B," + std::to_string(l1_.in_features()) + "), got " +
                nn::shape_str(features.shape()));
    return l2_.apply(nn::ops::relu(l1_.apply(features)));
  }

  /// reshape(P * l3) for P of shape (B, classes) -> (B, tau, hidden).
  nn::Tensor project(const nn::Tensor& p) const {
    require(p.rank() == 2 && p.dim(1) == l3_.value.dim(0), ErrorKind::Shape,
            "projection input must be (B," + std::to_string(l3_.value.dim(0)) + ")");
    const std::size_t B = p.dim(0), K = p.dim(1), N = tau_ * hidden_;
    nn::Tensor out({B, tau_, hidden_});
    for (std::size_t b = 0; b < B; ++b) {
      double* o = out.data() + b * N;
      for (std::size_t k = 0; k < K; ++k) {
        const double pk = p.at(b, k);
        if (pk == 0.0) continue;
        const double* row = &l3_.value.at(k, 0);
        for (std::size_t j = 0; j < N; ++j) o[j] += pk * row[j];
      }
    }
    return out;
  }

  /// Vibration word embedding H_V (B, tau, hidden) for encoder features (B, width).
  nn::Tensor align(const nn::Tensor& features) const { return project(logits(features)); }

  std::vector<nn::NamedTensor> named_tensors() const {
    std::vector<nn::NamedTensor> out;
    out.push_back({"alignment.tau", nn::Tensor({1}, {static_cast<double>(tau_)})});
    out.push_back({"alignment.hidden", nn::Tensor({1}, {static_cast<double>(hidden_)})});
    out.push_back({"alignment.l1.weight", l1_.weight.value});
    out.push_back({"alignment.l1.bias", l1_.bias.value});
    out.push_back({"alignment.l2.weight", l2_.weight.value});
    out.push_back({"alignment.l2.bias", l2_.bias.value});
    out.push_back({"alignment.l3.weight", l3_.value});
    return out;
  }

  static AlignmentLayer from_tensors(const std::vector<nn::NamedTensor>& tensors) {
    std::map<std::string, const nn::Tensor*> by;
    for (const auto& nt : tensors) by[nt.name] = &nt.tensor;
    auto get = [&](const std::string& n) -> const nn::Tensor& {
      auto it = by.find(n);
      require(it != by.end(), ErrorKind::Io, "alignment checkpoint lacks " + n);
      return *it->second;
    };
    const auto& w1 = get("alignment.l1.weight");
    const auto& w2 = get("alignment.l2.weight");
    nn::Linear l1("alignment.l1", w1.dim(1), w1.dim(0));
    nn::Linear l2("alignment.l2", w2.dim(1), w2.dim(0));
    l1.weight.value = w1;
    l1.bias.value = get("alignment.l1.bias");
    l2.weight.value = w2;
    l2.bias.value = get("alignment.l2.bias");
    return AlignmentLayer(std::move(l1), std::move(l2), get("alignment.l3.weight"),
                          static_cast<std::size_t>(get("alignment.tau")[0]),
                          static_cast<std::size_t>(get("alignment.hidden")[0]));
  }

 private:
  nn::Linear l1_, l2_;
  nn::Param l3_;  // bias-free, trainable
  std::size_t tau_, hidden_;
};

/// Copies the classifier of a pre-trained FCN and initializes l3 from the descriptions.
inline AlignmentLayer build_alignment(FcnModel& fcn, const FaultDescriptionSet& descriptions,
                                      const EmbeddingProvider& provider, std::size_t tau) {
  descriptions.validate();
  if (descriptions.size() != fcn.config().classes)
    fail(ErrorKind::Config, "FCN has " + std::to_string(fcn.config().classes) + " classes but " +
                                std::to_string(descriptions.size()) + " fault descriptions were given");
  nn::Linear l1 = fcn.l1();
  nn::Linear l2 = fcn.l2();
  l1.weight.name = "alignment.l1.weight";
  l1.bias.name = "alignment.l1.bias";
  l2.weight.name = "alignment.l2.weight";
  l2.bias.name = "alignment.l2.bias";
  return AlignmentLayer(std::move(l1), std::move(l2), init_l3(descriptions, provider, tau), tau, provider.hidden());
}

/// Injects each one-hot e_k after l2 and checks the output equals description k's
/// embedding bit for bit. Returns the number of classes that round-trip.
inline std::size_t one_hot_identity_count(const AlignmentLayer& layer, const FaultDescriptionSet& descriptions,
                                          const EmbeddingProvider& provider) {
  const std::size_t K = layer.l3().dim(0), tau = layer.tau(), h = layer.hidden();
  std::size_t ok = 0;
  for (std::size_t k = 0; k < K; ++k) {
    nn::Tensor p({1, K});
    p.at(0, k) = 1.0;
    nn::Tensor hv = layer.project(p);
    std::vector<int> tokens = provider.tokenize(descriptions.texts[k]);
    tokens.resize(tau, provider.pad_token());
    nn::Tensor e = provider.embed(tokens);
    bool same = true;
    for (std::size_t i = 0; i < tau * h; ++i) same = same && hv[i] == e[i];
    ok += same;
  }
  return ok;
}

}  // namespace bdx
