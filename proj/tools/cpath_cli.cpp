// cpath: command-line front end.
//
//   cpath train   --config rings.ini --out run/          dataset -> checkpoint
//   cpath connect --config rings.ini --out run/          checkpoint/config -> report
//   cpath profile --config rings.ini --x1 1.5,0 --x2 -1.5,0 --layer 0 --out run/
//   cpath decode  --decoder run/decoder_layer_2.cptd --path run/paths/x.csv --out run/
//
// On failure a single line is written to stderr:
//   error kind=<kind> message="<text>"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cpath/cpath.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> pairs;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config file");
  cmd->add_option("--seed", f.seed, "override the top-level seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--layer", f.layer, "restrict to one layer index");
  cmd->add_option("--pairs", f.pairs, "override experiment.pairs");
}

cpath::ExperimentConfig resolve_config(const CommonFlags& f) {
  cpath::ExperimentConfig cfg = f.config.empty() ? cpath::ExperimentConfig{}
                                                 : cpath::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.layer) cfg.layers = {*f.layer};
  if (f.pairs) cfg.pair_count = *f.pairs;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw cpath::IoError("cannot open '" + p.string() + "' for writing");
  out << text;
}

std::string trace_csv(const std::vector<double>& trace) {
  std::string s = "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    s += std::to_string(i) + "," + cpath::detail::fmt_double(trace[i]) + "\n";
  }
  return s;
}

int cmd_train(const CommonFlags& f) {
  const cpath::ExperimentConfig cfg = resolve_config(f);
  const fs::path out(cfg.out_dir);
  cpath::PreparedModel prep = cpath::prepare_model(cfg);
  fs::create_directories(out);
  cpath::save_model(prep.model, (out / "model.cpth").string());
  write_text(out / "train_loss.csv", trace_csv(prep.loss_trace));
  std::cout << "model " << (out / "model.cpth").string() << " train_accuracy "
            << cpath::detail::fmt_double(prep.train_accuracy) << "\n";

  for (std::size_t layer : cfg.decoder.layers) {
    prep.model.check_layer_index(layer);
    cpath::DecoderSpec spec{prep.model.dim_at(layer), cfg.decoder.hidden,
                            prep.model.input_dim(), cfg.resolved_decoder_seed()};
    cpath::DecoderTrainConfig dc =
        layer == prep.model.hidden_layers() && layer > 0 ? cfg.decoder.last : cfg.decoder.first;
    dc.seed = cfg.resolved_decoder_seed();
    cpath::DecoderTrainResult d = cpath::train_decoder(prep.model, layer, prep.data, spec, dc);
    const std::string name = "decoder_layer_" + std::to_string(layer);
    cpath::save_decoder(d.decoder, (out / (name + ".cptd")).string());
    write_text(out / (name + "_loss.csv"), trace_csv(d.loss_trace));
    std::cout << "decoder " << (out / (name + ".cptd")).string() << " mse "
              << cpath::detail::fmt_double(
                     cpath::reconstruction_mse(d.decoder, prep.model, prep.data))
              << "\n";
  }
  return 0;
}

int cmd_connect(const CommonFlags& f) {
  const cpath::ExperimentConfig cfg = resolve_config(f);
  const cpath::PreparedModel prep = cpath::prepare_model(cfg);
  const cpath::ExperimentReport rep = cpath::run_experiment(cfg, prep, &std::clog);
  cpath::write_report(rep, cfg.out_dir);
  std::cout << cpath::render_connectivity_text(rep);
  return 0;
}

int cmd_profile(const CommonFlags& f, const std::string& x1s, const std::string& x2s,
                std::optional<std::size_t> target) {
  cpath::ExperimentConfig cfg = resolve_config(f);
  if (!x1s.empty()) cfg.pair_x1 = cpath::detail::IniReader::parse_point("--x1", x1s);
  if (!x2s.empty()) cfg.pair_x2 = cpath::detail::IniReader::parse_point("--x2", x2s);
  if (target) cfg.pair_target = *target;
  if (!cfg.pair_x1 || !cfg.pair_x2) {
    throw cpath::ConfigError("profile needs both endpoints ([pair] x1/x2 or --x1/--x2)");
  }
  const std::size_t layer = f.layer.value_or(0);
  const cpath::PreparedModel prep = cpath::prepare_model(cfg);
  const cpath::PairVerdict v =
      cpath::connect_pair(prep.model, layer, *cfg.pair_x1, *cfg.pair_x2, cfg.neb, cfg.pair_target);
  const fs::path out(cfg.out_dir);
  const std::string stem = "profile_layer_" + std::to_string(layer);
  cpath::emit_path_profile_csv(v, (out / (stem + ".csv")).string());
  cpath::write_path_csv(v.final_path, (out / (stem + "_path.csv")).string());
  std::cout << "verdict " << cpath::verdict_name(v.verdict) << " target " << v.target
            << " iterations " << v.iterations_used << " max_energy_initial "
            << cpath::detail::fmt_double(v.max_energy_initial) << " max_energy_final "
            << cpath::detail::fmt_double(v.max_energy_final) << "\n";
  return 0;
}

int cmd_decode(const CommonFlags& f, const std::string& decoder_path, const std::string& path_file,
               std::size_t samples) {
  if (decoder_path.empty() || path_file.empty()) {
    throw cpath::ConfigError("decode needs --decoder and --path");
  }
  const cpath::DecoderModel dec = cpath::load_decoder(decoder_path);
  const cpath::PathState path = cpath::read_path_csv(path_file, dec.layer_index);
  const std::vector<cpath::DecodedSample> decoded = cpath::decode_path(dec, path, samples);
  const fs::path out(f.out.empty() ? "out" : f.out);
  std::string csv = "t";
  for (std::size_t i = 0; i < dec.output_dim(); ++i) csv += ",x_" + std::to_string(i);
  csv += "\n";
  for (const cpath::DecodedSample& s : decoded) {
    csv += cpath::detail::fmt_double(s.t);
    for (std::size_t i = 0; i < s.x.size(); ++i) csv += "," + cpath::detail::fmt_double(s.x[i]);
    csv += "\n";
  }
  write_text(out / "decoded.csv", csv);
  std::cout << "decoded " << decoded.size() << " samples to " << (out / "decoded.csv").string()
            << "\n";
  return 0;
}

std::string quoted(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  return "\"" + s + "\"";
}

int fail(const std::string& kind, const std::string& msg, int code) {
  std::cerr << "error kind=" << kind << " message=" << quoted(msg) << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"same-class path finding for feed-forward classifiers", "cpath"};
  app.require_subcommand(1);

  CommonFlags train_f, connect_f, profile_f, decode_f;
  auto* train = app.add_subcommand("train", "train a classifier (and decoders) from a config");
  add_common(train, train_f);
  auto* connect = app.add_subcommand("connect", "run the connectivity experiment");
  add_common(connect, connect_f);

  auto* profile = app.add_subcommand("profile", "connect a single pair and export its profile");
  add_common(profile, profile_f);
  std::string x1s, x2s;
  std::optional<std::size_t> target;
  profile->add_option("--x1", x1s, "first endpoint, comma-separated");
  profile->add_option("--x2", x2s, "second endpoint, comma-separated");
  profile->add_option("--target", target, "target class (default: shared prediction)");

  auto* decode = app.add_subcommand("decode", "decode a latent-space path file");
  add_common(decode, decode_f);
  std::string decoder_path, path_file;
  std::size_t samples = 10;
  decode->add_option("--decoder", decoder_path, "decoder checkpoint (.cptd)");
  decode->add_option("--path", path_file, "path CSV, one point per row");
  decode->add_option("--samples", samples, "samples per segment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), 64);
  }

  try {
    if (*train) return cmd_train(train_f);
    if (*connect) return cmd_connect(connect_f);
    if (*profile) return cmd_profile(profile_f, x1s, x2s, target);
    if (*decode) return cmd_decode(decode_f, decoder_path, path_file, samples);
  } catch (const cpath::Error& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal_error", e.what(), 2);
  }
  return 0;
}
