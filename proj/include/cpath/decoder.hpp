#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cpath/checkpoint.hpp"
#include "cpath/classifier.hpp"
#include "cpath/dataset.hpp"
#include "cpath/diffcore.hpp"
#include "cpath/pathfind.hpp"

namespace cpath {

struct DecoderSpec {
  std::size_t latent_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;
  std::uint64_t seed = 0;
};

/// Fully connected map from the representation at `layer_index` back to
/// the classifier's input space. Hidden layers ReLU, output unbounded.
struct DecoderModel {
  std::vector<LayerParams> layers;
  std::size_t layer_index = 0;

  std::size_t latent_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
};

/// Adam + MSE. Defaults follow the first-hidden-layer column; the epoch
/// count is a per-dataset choice (see first_hidden_layer / last_layer).
struct DecoderTrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;

  static DecoderTrainConfig first_hidden_layer() { return {0.001, 32, 10, 0}; }
  static DecoderTrainConfig last_layer() { return {0.001, 128, 5, 0}; }

  TrainConfig as_train_config() const {
    TrainConfig c;
    c.learning_rate = learning_rate;
    c.batch_size = batch_size;
    c.epochs = epochs;
    c.seed = seed;
    return c;
  }
};

struct DecoderTrainResult {
  DecoderModel decoder;
  std::vector<double> loss_trace;  // mean minibatch loss per epoch
  std::vector<double> train_mse;   // full training-set MSE after each epoch
};

inline DecoderModel init_decoder(const DecoderSpec& spec, std::size_t layer_index) {
  if (spec.latent_dim == 0 || spec.output_dim == 0) {
    throw ContractError("DecoderSpec dims must be positive");
  }
  std::vector<std::size_t> dims{spec.latent_dim};
  for (std::size_t h : spec.hidden_dims) {
    if (h == 0) throw ContractError("DecoderSpec hidden dims must be positive");
    dims.push_back(h);
  }
  dims.push_back(spec.output_dim);
  return {init_layers(dims, spec.seed, Activation::identity), layer_index};
}

inline Tensor decode(const DecoderModel& decoder, const Tensor& z) {
  if (z.rank() != 1 || z.size() != decoder.latent_dim()) {
    throw DimensionError("decode: latent " + Tensor::shape_string(z.shape()) +
                         " vs decoder input dim " + std::to_string(decoder.latent_dim()));
  }
  return forward(decoder.layers, z);
}

/// Mean per-coordinate squared error of decode(latent(x, l)) against x.
inline double reconstruction_mse(const DecoderModel& decoder, const MlpModel& classifier,
                                 const Dataset& data) {
  double s = 0.0;
  for (const Tensor& x : data.points) {
    s += mean_squared_error(decode(decoder, latent(classifier, x, decoder.layer_index)), x);
  }
  return s / static_cast<double>(data.size());
}

inline DecoderTrainResult train_decoder(const MlpModel& classifier, std::size_t layer_index,
                                        const Dataset& data, const DecoderSpec& spec,
                                        const DecoderTrainConfig& cfg) {
  classifier.validate();
  classifier.check_layer_index(layer_index);
  if (spec.latent_dim != classifier.dim_at(layer_index)) {
    throw DimensionError("decoder latent dim " + std::to_string(spec.latent_dim) +
                         " vs classifier layer " + std::to_string(layer_index) + " dim " +
                         std::to_string(classifier.dim_at(layer_index)));
  }
  if (spec.output_dim != classifier.input_dim()) {
    throw DimensionError("decoder output dim must equal classifier input dim");
  }
  if (data.size() == 0) throw ContractError("train_decoder: empty dataset");

  std::vector<Tensor> codes;
  codes.reserve(data.size());
  for (const Tensor& x : data.points) codes.push_back(latent(classifier, x, layer_index));

  DecoderTrainResult r{init_decoder(spec, layer_index), {}, {}};
  auto full_mse = [&](std::size_t) {
    double s = 0.0;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      s += mean_squared_error(forward(r.decoder.layers, codes[i]), data.points[i]);
    }
    r.train_mse.push_back(s / static_cast<double>(codes.size()));
  };
  std::vector<const Tensor*> zs;
  r.loss_trace = adam_epochs(r.decoder.layers, data.size(), cfg.as_train_config(),
                             [&](std::span<const std::size_t> idx) {
                               zs.clear();
                               for (std::size_t i : idx) zs.push_back(&codes[i]);
                               return batch_param_grad(r.decoder.layers, zs, [&](std::size_t j) {
                                 return MseHead{&data.points[idx[j]]};
                               });
                             },
                             full_mse);
  return r;
}

struct DecodedSample {
  double t;
  Tensor x;
};

/// Decodes every densified sample of a latent-space path, in order.
inline std::vector<DecodedSample> decode_path(const DecoderModel& decoder, const PathState& path,
                                              std::size_t per_segment) {
  path.validate();
  if (path.points.front().rank() != 1 || path.points.front().size() != decoder.latent_dim()) {
    throw ContractError("decode_path: path dim " +
                        Tensor::shape_string(path.points.front().shape()) +
                        " does not match decoder latent dim " +
                        std::to_string(decoder.latent_dim()));
  }
  std::vector<DecodedSample> out;
  for (PathSample& s : densify(path, per_segment)) out.push_back({s.t, decode(decoder, s.point)});
  return out;
}

inline std::string serialize_decoder(const DecoderModel& decoder) {
  detail::ByteWriter w;
  w.raw(kDecoderMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(decoder.layer_index));
  detail::write_layers(w, decoder.layers);
  return w.take();
}

inline DecoderModel deserialize_decoder(std::string_view bytes) {
  detail::ByteReader r(bytes);
  detail::read_header(r, kDecoderMagic);
  const std::uint32_t layer = r.u32("bound layer index");
  DecoderModel d;
  d.layers = detail::read_layers(r);
  d.layer_index = layer;
  return d;
}

inline void save_decoder(const DecoderModel& decoder, const std::string& path) {
  detail::write_file(path, serialize_decoder(decoder));
}

inline DecoderModel load_decoder(const std::string& path) {
  return deserialize_decoder(detail::read_file(path));
}

}  // namespace cpath
