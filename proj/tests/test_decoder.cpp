#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "cpath/decoder.hpp"
#include "test_util.hpp"

using namespace cpath;
using cpath::testing::random_vector;
using cpath::testing::rings_data;
using cpath::testing::rings_model;

namespace {

DecoderTrainConfig identity_cfg() {
  DecoderTrainConfig c = DecoderTrainConfig::first_hidden_layer();
  c.epochs = 200;
  c.seed = 3;
  return c;
}

const DecoderTrainResult& identity_decoder() {
  static const DecoderTrainResult r =
      train_decoder(rings_model(), 0, rings_data(), {2, {}, 2, 3}, identity_cfg());
  return r;
}

DecoderTrainConfig last_layer_cfg() {
  DecoderTrainConfig c = DecoderTrainConfig::last_layer();
  c.epochs = 200;
  c.seed = 7;
  return c;
}

const DecoderTrainResult& last_layer_decoder() {
  static const DecoderTrainResult r =
      train_decoder(rings_model(), 2, rings_data(), {32, {64, 64}, 2, 7}, last_layer_cfg());
  return r;
}

std::size_t tail_start(const std::vector<double>& trace) {
  return trace.size() - std::max<std::size_t>(2, trace.size() / 10);
}

void expect_tail_non_increasing(const std::vector<double>& trace) {
  for (std::size_t i = tail_start(trace) + 1; i < trace.size(); ++i) {
    EXPECT_LE(trace[i], trace[i - 1]) << "epoch " << i;
  }
}

}  // namespace

TEST(DecoderConfig, TableDefaults) {
  const DecoderTrainConfig first = DecoderTrainConfig::first_hidden_layer();
  const DecoderTrainConfig last = DecoderTrainConfig::last_layer();
  EXPECT_EQ(first.learning_rate, 0.001);
  EXPECT_EQ(first.batch_size, 32u);
  EXPECT_EQ(first.epochs, 10u);
  EXPECT_EQ(last.learning_rate, 0.001);
  EXPECT_EQ(last.batch_size, 128u);
  EXPECT_EQ(last.epochs, 5u);
}

TEST(TrainDecoder, LayerZeroLearnsIdentity) {
  const DecoderTrainResult& r = identity_decoder();
  EXPECT_EQ(r.decoder.layers.size(), 1u);
  EXPECT_LT(reconstruction_mse(r.decoder, rings_model(), rings_data()), 1e-4);
  const Tensor x = Tensor::vector({0.7, -1.2});
  EXPECT_LT(distance(decode(r.decoder, x), x), 1e-2);
  ASSERT_EQ(r.train_mse.size(), 200u);
  expect_tail_non_increasing(r.train_mse);
}

TEST(TrainDecoder, LastHiddenLayerHeldOut) {
  const DecoderTrainResult& r = last_layer_decoder();
  const Dataset held_out = make_dataset(DatasetKind::rings, 500, DatasetParams{}, 99);
  EXPECT_LT(reconstruction_mse(r.decoder, rings_model(), held_out), 0.05);
  const std::vector<double>& mse = r.train_mse;
  EXPECT_LE(mse.back(), mse[tail_start(mse)]);
  EXPECT_DOUBLE_EQ(mse.back(), reconstruction_mse(r.decoder, rings_model(), rings_data()));
}

TEST(TrainDecoder, Deterministic) {
  DecoderTrainConfig c = identity_cfg();
  c.epochs = 3;
  const DecoderSpec spec{32, {8}, 2, 5};
  const DecoderTrainResult a = train_decoder(rings_model(), 1, rings_data(), spec, c);
  const DecoderTrainResult b = train_decoder(rings_model(), 1, rings_data(), spec, c);
  EXPECT_EQ(serialize_decoder(a.decoder), serialize_decoder(b.decoder));
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(TrainDecoder, ZeroLearningRateLeavesParameters) {
  DecoderTrainConfig c = identity_cfg();
  c.learning_rate = 0.0;
  c.epochs = 2;
  const DecoderSpec spec{32, {16}, 2, 5};
  const DecoderTrainResult r = train_decoder(rings_model(), 2, rings_data(), spec, c);
  EXPECT_EQ(serialize_decoder(r.decoder), serialize_decoder(init_decoder(spec, 2)));
}

TEST(TrainDecoder, SpecErrors) {
  const DecoderTrainConfig c = identity_cfg();
  EXPECT_THROW(train_decoder(rings_model(), 1, rings_data(), {2, {}, 2, 0}, c), DimensionError);
  EXPECT_THROW(train_decoder(rings_model(), 0, rings_data(), {2, {}, 3, 0}, c), DimensionError);
  EXPECT_THROW(train_decoder(rings_model(), 3, rings_data(), {2, {}, 2, 0}, c), ContractError);
  EXPECT_THROW(init_decoder({0, {}, 2, 0}, 0), ContractError);
  EXPECT_THROW(init_decoder({2, {0}, 2, 0}, 0), ContractError);
}

TEST(TrainDecoder, DivergenceIsATrainingError) {
  Dataset d = rings_data();
  d.points[0][1] = std::nan("");
  DecoderTrainConfig c = identity_cfg();
  c.epochs = 1;
  EXPECT_THROW(train_decoder(rings_model(), 0, d, {2, {}, 2, 0}, c), TrainingError);
}

TEST(Decode, ShapeAndZeroWeights) {
  DecoderModel d = init_decoder({5, {4}, 3, 1}, 1);
  std::mt19937_64 rng(2);
  EXPECT_EQ(decode(d, random_vector(rng, 5)).size(), 3u);
  EXPECT_THROW(decode(d, random_vector(rng, 4)), DimensionError);

  for (LayerParams& l : d.layers) {
    for (double& w : l.weights.data()) w = 0.0;
  }
  d.layers.back().bias = Tensor::vector({0.25, -1.0, 3.0});
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(decode(d, random_vector(rng, 5, 4.0)), d.layers.back().bias);
  }
}

TEST(DecodePath, LengthAndOrder) {
  const DecoderModel d = init_decoder({3, {4}, 2, 1}, 1);
  std::mt19937_64 rng(3);
  const PathState p = straight_line_path(random_vector(rng, 3), random_vector(rng, 3), 4, 1);
  const auto out = decode_path(d, p, 10);
  const auto samples = densify(p, 10);
  ASSERT_EQ(out.size(), samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].t, samples[i].t);
    EXPECT_TRUE(bitwise_equal(out[i].x, decode(d, samples[i].point)));
  }
}

TEST(DecodePath, ConstantPath) {
  const DecoderModel d = init_decoder({3, {4}, 2, 1}, 1);
  const Tensor z = Tensor::vector({0.2, 0.0, -0.4});
  const auto out = decode_path(d, straight_line_path(z, z, 3), 2);
  for (const DecodedSample& s : out) EXPECT_TRUE(bitwise_equal(s.x, out.front().x));
}

TEST(DecodePath, IdentityDecoderKeepsLinesStraight) {
  const DecoderTrainResult& r = identity_decoder();
  const double mse = reconstruction_mse(r.decoder, rings_model(), rings_data());
  const Tensor a = Tensor::vector({-1.5, 0.5});
  const Tensor b = Tensor::vector({1.0, 1.8});
  const auto out = decode_path(r.decoder, straight_line_path(a, b, 5), 4);
  const Tensor u = (b - a) * (1.0 / norm(b - a));
  // distance of each decoded point from the line through a, b
  const double tol = 10.0 * std::sqrt(mse) + 1e-9;
  for (const DecodedSample& s : out) {
    const Tensor r0 = s.x - a;
    EXPECT_LT(std::abs(r0[0] * u[1] - r0[1] * u[0]), tol);
  }
}

TEST(DecodePath, DimensionMismatch) {
  const DecoderModel d = init_decoder({3, {}, 2, 1}, 1);
  const PathState p = straight_line_path(Tensor::vector({0, 0}), Tensor::vector({1, 1}), 2);
  EXPECT_THROW(decode_path(d, p, 3), ContractError);
}

TEST(DecoderCheckpoint, RoundTripIsBitwise) {
  const DecoderModel& d = last_layer_decoder().decoder;
  const std::string bytes = serialize_decoder(d);
  EXPECT_EQ(bytes.substr(0, 4), "CPTD");
  const DecoderModel back = deserialize_decoder(bytes);
  EXPECT_EQ(back.layer_index, 2u);
  EXPECT_EQ(serialize_decoder(back), bytes);
  ASSERT_EQ(back.layers.size(), d.layers.size());
  for (std::size_t i = 0; i < d.layers.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(back.layers[i].weights, d.layers[i].weights));
    EXPECT_TRUE(bitwise_equal(back.layers[i].bias, d.layers[i].bias));
    EXPECT_EQ(back.layers[i].activation, d.layers[i].activation);
  }

  const auto file = std::filesystem::temp_directory_path() / "cpath_decoder_rt.cptd";
  save_decoder(d, file.string());
  EXPECT_EQ(serialize_decoder(load_decoder(file.string())), bytes);
  std::filesystem::remove(file);
}

TEST(DecoderCheckpoint, MagicIsChecked) {
  const std::string bytes = serialize_decoder(init_decoder({2, {3}, 2, 1}, 0));
  EXPECT_THROW(deserialize_model(bytes), FormatError);
  EXPECT_THROW(deserialize_decoder(serialize_model(rings_model())), FormatError);
  EXPECT_THROW(deserialize_decoder(bytes.substr(0, 10)), FormatError);
}
