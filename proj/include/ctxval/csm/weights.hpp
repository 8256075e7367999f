#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctxval/core/error.hpp"

namespace ctxval::csm {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Architecture description stored in the weight file header.
struct CsmMetadata {
  int format_version = 1;
  int d_model = 0;
  int layers = 3;
  int heads = 8;
  int ffn_dim = 0;
  int mlp_hidden = 0;
  std::string norm = "pre-layernorm";
  std::string activation = "gelu-erf";
  double layer_norm_eps = 1e-5;
  std::string positional_encoding = "none";
  std::string local_encoder = "bert-base-uncased";

  /// Throws WeightFileError(Shape) on inconsistent dimensions and
  /// WeightFileError(Parse) on an unsupported architecture tag.
  void validate() const;

  bool operator==(const CsmMetadata&) const = default;
};

/// One pre-LN transformer block. Matrices are [out, in].
template <typename Scalar>
struct CsmLayer {
  Vector<Scalar> ln1_weight, ln1_bias;
  Matrix<Scalar> q_weight, k_weight, v_weight, o_weight;
  Vector<Scalar> q_bias, k_bias, v_bias, o_bias;
  Vector<Scalar> ln2_weight, ln2_bias;
  Matrix<Scalar> fc1_weight, fc2_weight;
  Vector<Scalar> fc1_bias, fc2_bias;

  template <typename T>
  CsmLayer<T> cast() const {
    return {ln1_weight.template cast<T>(), ln1_bias.template cast<T>(),
            q_weight.template cast<T>(),   k_weight.template cast<T>(),
            v_weight.template cast<T>(),   o_weight.template cast<T>(),
            q_bias.template cast<T>(),     k_bias.template cast<T>(),
            v_bias.template cast<T>(),     o_bias.template cast<T>(),
            ln2_weight.template cast<T>(), ln2_bias.template cast<T>(),
            fc1_weight.template cast<T>(), fc2_weight.template cast<T>(),
            fc1_bias.template cast<T>(),   fc2_bias.template cast<T>()};
  }
};

template <typename Scalar>
struct CsmWeights {
  CsmMetadata meta;
  std::vector<CsmLayer<Scalar>> layers;
  Matrix<Scalar> head_fc1_weight;  // [mlp_hidden, d]
  Vector<Scalar> head_fc1_bias;
  Matrix<Scalar> head_fc2_weight;  // [1, mlp_hidden]
  Vector<Scalar> head_fc2_bias;    // [1]

  template <typename T>
  CsmWeights<T> cast() const {
    CsmWeights<T> out;
    out.meta = meta;
    for (const auto& l : layers) out.layers.push_back(l.template cast<T>());
    out.head_fc1_weight = head_fc1_weight.template cast<T>();
    out.head_fc1_bias = head_fc1_bias.template cast<T>();
    out.head_fc2_weight = head_fc2_weight.template cast<T>();
    out.head_fc2_bias = head_fc2_bias.template cast<T>();
    return out;
  }
};

class WeightFileError : public DataError {
 public:
  enum class Reason { Parse, Shape, Checksum };

  WeightFileError(Reason reason, const std::string& what) : DataError(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

/// Zero-initialized weights with the shapes `meta` implies (layer norms get
/// unit scale).
CsmWeights<float> zero_weights(const CsmMetadata& meta);

/// Weights drawn uniformly from [-scale, scale] (layer norm scales around 1).
CsmWeights<float> random_weights(const CsmMetadata& meta, std::uint64_t seed, float scale = 0.3f);

/// Checks every tensor shape against the metadata.
void validate_shapes(const CsmWeights<float>& w);

/// .csmw layout: u64 little-endian header length, JSON header (metadata,
/// tensor manifest with name/dtype/shape/offset/length, sha256 checksum of
/// the payload), then the float32 little-endian payload in manifest order.
void save_weights(const std::filesystem::path& path, const CsmWeights<float>& w);
CsmWeights<float> load_weights(const std::filesystem::path& path);

/// Tensor names in payload order.
std::vector<std::string> tensor_names(const CsmMetadata& meta);

}  // namespace ctxval::csm
