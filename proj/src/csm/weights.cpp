#include "ctxval/csm/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "ctxval/core/json_io.hpp"
#include "ctxval/util/hash.hpp"
#include "ctxval/util/rng.hpp"

namespace ctxval::csm {

static_assert(std::endian::native == std::endian::little, "the .csmw payload is read in place as little-endian");

using nlohmann::json;
using Reason = WeightFileError::Reason;

void CsmMetadata::validate() const {
  if (format_version != 1) throw WeightFileError(Reason::Parse, fmt::format("unsupported format_version {}", format_version));
  if (d_model < 1 || layers < 1 || heads < 1 || ffn_dim < 1 || mlp_hidden < 1) {
    throw WeightFileError(Reason::Shape, "d_model, layers, heads, ffn_dim and mlp_hidden must be positive");
  }
  if (d_model % heads != 0) {
    throw WeightFileError(Reason::Shape, fmt::format("d_model {} is not divisible by heads {}", d_model, heads));
  }
  if (norm != "pre-layernorm") throw WeightFileError(Reason::Parse, "unsupported norm '" + norm + "'");
  if (activation != "gelu-erf") throw WeightFileError(Reason::Parse, "unsupported activation '" + activation + "'");
  if (positional_encoding != "none") {
    throw WeightFileError(Reason::Parse, "unsupported positional_encoding '" + positional_encoding + "'");
  }
  if (!(layer_norm_eps > 0.0)) throw WeightFileError(Reason::Parse, "layer_norm_eps must be positive");
}

namespace {

struct TensorRef {
  std::string name;
  Matrix<float>* mat = nullptr;
  Vector<float>* vec = nullptr;
  int rows = 0;
  int cols = 1;
};

template <typename W>
std::vector<TensorRef> tensor_refs(W& w) {
  const auto& m = w.meta;
  const int d = m.d_model;
  std::vector<TensorRef> refs;
  auto mat = [&](std::string name, auto& t, int r, int c) {
    refs.push_back({std::move(name), const_cast<Matrix<float>*>(&t), nullptr, r, c});
  };
  auto vec = [&](std::string name, auto& t, int r) {
    refs.push_back({std::move(name), nullptr, const_cast<Vector<float>*>(&t), r, 1});
  };
  for (int i = 0; i < static_cast<int>(w.layers.size()); ++i) {
    auto& l = w.layers[i];
    const std::string p = fmt::format("global.layers.{}.", i);
    vec(p + "ln1.weight", l.ln1_weight, d);
    vec(p + "ln1.bias", l.ln1_bias, d);
    mat(p + "attn.q.weight", l.q_weight, d, d);
    vec(p + "attn.q.bias", l.q_bias, d);
    mat(p + "attn.k.weight", l.k_weight, d, d);
    vec(p + "attn.k.bias", l.k_bias, d);
    mat(p + "attn.v.weight", l.v_weight, d, d);
    vec(p + "attn.v.bias", l.v_bias, d);
    mat(p + "attn.o.weight", l.o_weight, d, d);
    vec(p + "attn.o.bias", l.o_bias, d);
    vec(p + "ln2.weight", l.ln2_weight, d);
    vec(p + "ln2.bias", l.ln2_bias, d);
    mat(p + "ffn.fc1.weight", l.fc1_weight, m.ffn_dim, d);
    vec(p + "ffn.fc1.bias", l.fc1_bias, m.ffn_dim);
    mat(p + "ffn.fc2.weight", l.fc2_weight, d, m.ffn_dim);
    vec(p + "ffn.fc2.bias", l.fc2_bias, d);
  }
  mat("head.fc1.weight", w.head_fc1_weight, m.mlp_hidden, d);
  vec("head.fc1.bias", w.head_fc1_bias, m.mlp_hidden);
  mat("head.fc2.weight", w.head_fc2_weight, 1, m.mlp_hidden);
  vec("head.fc2.bias", w.head_fc2_bias, 1);
  return refs;
}

json metadata_json(const CsmMetadata& m) {
  return json{{"format_version", m.format_version},
              {"d_model", m.d_model},
              {"layers", m.layers},
              {"heads", m.heads},
              {"ffn_dim", m.ffn_dim},
              {"mlp_hidden", m.mlp_hidden},
              {"norm", m.norm},
              {"activation", m.activation},
              {"layer_norm_eps", m.layer_norm_eps},
              {"positional_encoding", m.positional_encoding},
              {"local_encoder", m.local_encoder}};
}

CsmMetadata metadata_from_json(const json& j) {
  CsmMetadata m;
  m.format_version = j.at("format_version").get<int>();
  m.d_model = j.at("d_model").get<int>();
  m.layers = j.at("layers").get<int>();
  m.heads = j.at("heads").get<int>();
  m.ffn_dim = j.at("ffn_dim").get<int>();
  m.mlp_hidden = j.at("mlp_hidden").get<int>();
  m.norm = j.at("norm").get<std::string>();
  m.activation = j.at("activation").get<std::string>();
  m.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  m.positional_encoding = j.at("positional_encoding").get<std::string>();
  m.local_encoder = j.at("local_encoder").get<std::string>();
  return m;
}

}  // namespace

std::vector<std::string> tensor_names(const CsmMetadata& meta) {
  CsmWeights<float> w;
  w.meta = meta;
  w.layers.resize(static_cast<std::size_t>(std::max(meta.layers, 0)));
  std::vector<std::string> names;
  for (const auto& r : tensor_refs(w)) names.push_back(r.name);
  return names;
}

CsmWeights<float> zero_weights(const CsmMetadata& meta) {
  meta.validate();
  CsmWeights<float> w;
  w.meta = meta;
  w.layers.resize(static_cast<std::size_t>(meta.layers));
  for (auto& r : tensor_refs(w)) {
    if (r.mat) *r.mat = Matrix<float>::Zero(r.rows, r.cols);
    else *r.vec = Vector<float>::Zero(r.rows);
  }
  for (auto& l : w.layers) {
    l.ln1_weight.setOnes();
    l.ln2_weight.setOnes();
  }
  return w;
}

CsmWeights<float> random_weights(const CsmMetadata& meta, std::uint64_t seed, float scale) {
  CsmWeights<float> w = zero_weights(meta);
  Rng rng(seed);
  auto draw = [&] { return static_cast<float>((2.0 * rng.uniform() - 1.0) * scale); };
  for (auto& r : tensor_refs(w)) {
    const bool ln_scale = r.name.ends_with("ln1.weight") || r.name.ends_with("ln2.weight");
    if (r.mat) {
      for (Eigen::Index i = 0; i < r.mat->rows(); ++i)
        for (Eigen::Index j = 0; j < r.mat->cols(); ++j) (*r.mat)(i, j) = draw();
    } else {
      for (Eigen::Index i = 0; i < r.vec->size(); ++i) (*r.vec)(i) = (ln_scale ? 1.0f : 0.0f) + draw();
    }
  }
  return w;
}

void validate_shapes(const CsmWeights<float>& w) {
  w.meta.validate();
  if (static_cast<int>(w.layers.size()) != w.meta.layers) {
    throw WeightFileError(Reason::Shape, fmt::format("{} layers present, metadata says {}", w.layers.size(), w.meta.layers));
  }
  for (const auto& r : tensor_refs(w)) {
    const Eigen::Index rows = r.mat ? r.mat->rows() : r.vec->rows();
    const Eigen::Index cols = r.mat ? r.mat->cols() : 1;
    if (rows != r.rows || cols != r.cols) {
      throw WeightFileError(Reason::Shape, fmt::format("tensor {} has shape [{}, {}], expected [{}, {}]", r.name, rows,
                                                       cols, r.rows, r.cols));
    }
  }
}

void save_weights(const std::filesystem::path& path, const CsmWeights<float>& w) {
  validate_shapes(w);
  std::string payload;
  json manifest = json::array();
  for (const auto& r : tensor_refs(w)) {
    std::vector<float> flat;
    flat.reserve(static_cast<std::size_t>(r.rows) * static_cast<std::size_t>(r.cols));
    for (int i = 0; i < r.rows; ++i) {
      for (int j = 0; j < r.cols; ++j) flat.push_back(r.mat ? (*r.mat)(i, j) : (*r.vec)(i));
    }
    const std::size_t bytes = flat.size() * sizeof(float);
    json shape = r.mat ? json::array({r.rows, r.cols}) : json::array({r.rows});
    manifest.push_back(
        {{"name", r.name}, {"dtype", "float32"}, {"shape", shape}, {"offset", payload.size()}, {"length", bytes}});
    payload.append(reinterpret_cast<const char*>(flat.data()), bytes);
  }
  const json header{{"format", "csmw"},
                    {"metadata", metadata_json(w.meta)},
                    {"tensors", manifest},
                    {"payload_length", payload.size()},
                    {"checksum", "sha256:" + sha256_hex(payload)}};
  const std::string head = header.dump();
  std::string out(8, '\0');
  const std::uint64_t len = head.size();
  std::memcpy(out.data(), &len, sizeof len);
  out += head;
  out += payload;
  write_file_atomic(path, out);
}

CsmWeights<float> load_weights(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw WeightFileError(Reason::Parse, e.what());
  }
  const std::string where = path.string();
  if (bytes.size() < 8) throw WeightFileError(Reason::Parse, where + ": too short for a .csmw header");
  std::uint64_t head_len = 0;
  std::memcpy(&head_len, bytes.data(), sizeof head_len);
  if (head_len > bytes.size() - 8) throw WeightFileError(Reason::Parse, where + ": header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.substr(8, head_len));
  } catch (const json::exception& e) {
    throw WeightFileError(Reason::Parse, where + ": bad header JSON: " + e.what());
  }
  const std::string payload = bytes.substr(8 + head_len);

  CsmWeights<float> w;
  std::string checksum;
  std::vector<json> manifest;
  try {
    if (header.at("format").get<std::string>() != "csmw") throw WeightFileError(Reason::Parse, where + ": not a csmw file");
    w.meta = metadata_from_json(header.at("metadata"));
    checksum = header.at("checksum").get<std::string>();
    manifest = header.at("tensors").get<std::vector<json>>();
  } catch (const json::exception& e) {
    throw WeightFileError(Reason::Parse, where + ": bad header: " + e.what());
  }
  if (checksum != "sha256:" + sha256_hex(payload)) {
    throw WeightFileError(Reason::Checksum, where + ": payload checksum mismatch (truncated or corrupted file)");
  }
  w.meta.validate();
  w.layers.resize(static_cast<std::size_t>(w.meta.layers));

  auto refs = tensor_refs(w);
  if (manifest.size() != refs.size()) {
    throw WeightFileError(Reason::Shape, fmt::format("{}: {} tensors in manifest, architecture needs {}", where,
                                                     manifest.size(), refs.size()));
  }
  for (std::size_t t = 0; t < refs.size(); ++t) {
    auto& r = refs[t];
    const json& m = manifest[t];
    std::vector<int> shape;
    std::size_t offset = 0, length = 0;
    try {
      if (m.at("name").get<std::string>() != r.name) {
        throw WeightFileError(Reason::Parse, where + ": expected tensor " + r.name + " at position " + std::to_string(t));
      }
      if (m.at("dtype").get<std::string>() != "float32") throw WeightFileError(Reason::Parse, where + ": " + r.name + " is not float32");
      shape = m.at("shape").get<std::vector<int>>();
      offset = m.at("offset").get<std::size_t>();
      length = m.at("length").get<std::size_t>();
    } catch (const json::exception& e) {
      throw WeightFileError(Reason::Parse, where + ": bad manifest entry: " + e.what());
    }
    const std::vector<int> expected = r.mat ? std::vector<int>{r.rows, r.cols} : std::vector<int>{r.rows};
    if (shape != expected) {
      throw WeightFileError(Reason::Shape, fmt::format("{}: tensor {} has shape [{}], expected [{}]", where, r.name,
                                                       fmt::join(shape, ", "), fmt::join(expected, ", ")));
    }
    const std::size_t count = static_cast<std::size_t>(r.rows) * static_cast<std::size_t>(r.cols);
    if (length != count * sizeof(float) || offset > payload.size() || length > payload.size() - offset) {
      throw WeightFileError(Reason::Shape, where + ": tensor " + r.name + " does not fit the payload");
    }
    std::vector<float> flat(count);
    std::memcpy(flat.data(), payload.data() + offset, length);
    if (r.mat) {
      r.mat->resize(r.rows, r.cols);
      for (int i = 0; i < r.rows; ++i)
        for (int j = 0; j < r.cols; ++j) (*r.mat)(i, j) = flat[static_cast<std::size_t>(i) * r.cols + j];
    } else {
      r.vec->resize(r.rows);
      for (int i = 0; i < r.rows; ++i) (*r.vec)(i) = flat[static_cast<std::size_t>(i)];
    }
  }
  return w;
}

}  // namespace ctxval::csm
