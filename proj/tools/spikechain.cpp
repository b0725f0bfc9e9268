#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "spikechain/analysis.hpp"
#include "spikechain/error.hpp"
#include "spikechain/experiment.hpp"
#include "spikechain/gradcheck.hpp"
#include "spikechain/synth.hpp"

namespace fs = std::filesystem;
using namespace spikechain;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string config;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << text;
}

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> default_users(int count) {
  std::vector<std::string> users;
  for (int u = 1; u <= count; ++u) users.push_back(fmt::format("u{:02}", u));
  return users;
}

// synth writes one EVB1 file per stream plus index.json carrying the metadata
// that the binary format lacks.
void write_corpus(const std::vector<EventStream>& corpus, const fs::path& dir, bool csv) {
  fs::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (const auto& s : corpus) {
    const std::string stem = fmt::format("{}_{}_g{}", s.meta.user, s.meta.lighting, s.meta.gesture);
    const std::string file = stem + (csv ? ".csv" : ".evb");
    if (csv) {
      write_events_csv(s, dir / file);
    } else {
      write_events(s, dir / file);
    }
    index.push_back({{"file", file},
                     {"user", s.meta.user},
                     {"lighting", s.meta.lighting},
                     {"gesture", s.meta.gesture},
                     {"width", s.width},
                     {"height", s.height}});
  }
  spit(dir / "index.json", index.dump(2) + "\n");
}

std::vector<EventStream> read_corpus(const fs::path& dir) {
  const auto index = nlohmann::json::parse(slurp(dir / "index.json"));
  std::vector<EventStream> corpus;
  for (const auto& row : index) {
    const std::string file = row.at("file");
    EventStream s = file.ends_with(".csv")
                        ? read_events_csv(dir / file, row.at("width"), row.at("height"))
                        : read_events(dir / file);
    s.meta.user = row.at("user");
    s.meta.lighting = row.at("lighting");
    s.meta.gesture = row.at("gesture");
    corpus.push_back(std::move(s));
  }
  return corpus;
}

void print_metrics(const Metrics& m) {
  std::cout << fmt::format("accuracy {:.4f}  loss {:.4f}", m.accuracy, m.loss);
  if (m.r_error) std::cout << fmt::format("  r_error {:.4f}", *m.r_error);
  if (m.r_error_alt) std::cout << fmt::format("  r_error_true_prev {:.4f}", *m.r_error_alt);
  if (m.p_d) std::cout << fmt::format("  no_order {:.4f}", *m.p_d);
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chained event-gesture benchmarks and spiking network training"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Override every seed");
  app.add_option("--threads", g.threads, "Worker threads for corpus synthesis")->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "Network configuration JSON");

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize a gesture corpus");
  CorpusConfig corpus;
  int user_count = 10;
  std::string users, lightings = "led,natural", synth_out;
  bool synth_csv = false;
  synth->add_option("--gestures", corpus.gestures)->check(CLI::PositiveNumber);
  synth->add_option("--users", users, "Comma-separated user ids");
  synth->add_option("--user-count", user_count, "Users u01..uNN when --users is absent");
  synth->add_option("--lightings", lightings);
  synth->add_option("--duration-ms", corpus.duration_ms);
  synth->add_option("--width", corpus.width);
  synth->add_option("--height", corpus.height);
  synth->add_flag("--csv", synth_csv, "Write CSV instead of EVB1");
  synth->add_option("--out", synth_out)->required();

  // chain
  auto* chain = app.add_subcommand("chain", "Generate a chained dataset");
  ChainTaskSpec spec;
  GenerateOptions gen;
  std::string test_users, events_dir, chain_out;
  bool repeat = false;
  chain->add_option("--n", spec.gestures)->check(CLI::PositiveNumber);
  chain->add_option("--l", spec.length)->check(CLI::PositiveNumber);
  chain->add_flag("--repeat", repeat, "Allow consecutive repeats");
  chain->add_option("--alpha1", spec.alpha1);
  chain->add_option("--alpha2", spec.alpha2);
  chain->add_option("--ftotal", spec.total_frames);
  chain->add_option("--test-users", test_users)->required();
  chain->add_option("--multiplier", gen.multiplier);
  chain->add_flag("--binarize", gen.binarize);
  chain->add_option("--events", events_dir, "Corpus written by synth (synthesized on the fly otherwise)");
  chain->add_option("--user-count", user_count);
  chain->add_option("--out", chain_out)->required();

  // frames
  auto* frames_cmd = app.add_subcommand("frames", "Accumulate one event file into frames");
  std::string frames_in, frames_out;
  std::uint32_t frame_count = 0, csv_width = 0, csv_height = 0;
  bool frames_binarize = false;
  frames_cmd->add_option("--events", frames_in)->required()->check(CLI::ExistingFile);
  frames_cmd->add_option("--frames", frame_count)->required()->check(CLI::PositiveNumber);
  frames_cmd->add_option("--width", csv_width, "Sensor width for CSV input");
  frames_cmd->add_option("--height", csv_height, "Sensor height for CSV input");
  frames_cmd->add_flag("--binarize", frames_binarize);
  frames_cmd->add_option("--out", frames_out)->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a network on a dataset");
  std::string data_dir, ckpt, variant = "snn-bn", log_path;
  std::optional<int> epochs;
  std::optional<double> lr;
  train_cmd->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", ckpt)->required();
  train_cmd->add_option("--variant", variant, "Preset used when --config is absent");
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--lr", lr);
  train_cmd->add_option("--log", log_path, "Write the epoch log as JSON");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string split = "test", json_out;
  eval_cmd->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--split", split);
  eval_cmd->add_option("--json", json_out);

  // baseline
  auto* baseline = app.add_subcommand("baseline", "No-order classification probability");
  int bn = 3, bl = 4;
  baseline->add_option("--n", bn)->check(CLI::PositiveNumber);
  baseline->add_option("--l", bl)->check(CLI::PositiveNumber);

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Evaluate with BNTT families averaged over time");
  std::string keep = "all";
  ablate_cmd->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  ablate_cmd->add_option("--keep", keep, "Families left time-varying: mean,var,gamma,beta|all|none");
  ablate_cmd->add_option("--split", split);
  ablate_cmd->add_option("--json", json_out);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Export temporal attention profiles");
  std::string analyze_out;
  AttentionOptions attention;
  bool unnormalized = false;
  analyze->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  analyze->add_option("--out", analyze_out)->required();
  analyze->add_flag("--gamma", attention.include_gamma, "Also export BNTT gamma profiles");
  analyze->add_flag("--unnormalized", unnormalized, "Use the (1/T) sum form of the center of mass");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare BPTT with central differences");
  GradcheckOptions gc;
  int gc_steps = 8;
  double tolerance = 1e-4;
  gradcheck->add_option("--eps", gc.epsilon);
  gradcheck->add_option("--probes", gc.probes);
  gradcheck->add_option("--T", gc_steps);
  gradcheck->add_option("--tolerance", tolerance);

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed_value;

  try {
    if (*synth) {
      corpus.users = users.empty() ? default_users(user_count) : split_list(users);
      corpus.lightings = split_list(lightings);
      corpus.threads = g.threads;
      if (g.seed) corpus.seed = *g.seed;
      const auto streams = synth_corpus(corpus);
      write_corpus(streams, synth_out, synth_csv);
      std::cout << fmt::format("wrote {} streams to {}\n", streams.size(), synth_out);
    } else if (*chain) {
      spec.repetition = repeat;
      if (g.seed) spec.seed = *g.seed;
      gen.test_users = split_list(test_users);
      std::vector<EventStream> sources;
      if (!events_dir.empty()) {
        sources = read_corpus(events_dir);
      } else {
        CorpusConfig cc;
        cc.gestures = spec.gestures;
        cc.users = default_users(user_count);
        cc.seed = spec.seed * 1000003ull;
        cc.threads = g.threads;
        sources = synth_corpus(cc);
      }
      const Dataset data = generate_dataset(spec, sources, gen);
      for (const auto& w : data.warnings) std::cerr << "warning: " << w << "\n";
      write_dataset(data, chain_out);
      std::cout << fmt::format("{} classes, train {} validation {} test {}\n",
                               data.manifest.classes.size(), data.split(Split::kTrain).size(),
                               data.split(Split::kValidation).size(), data.split(Split::kTest).size());
    } else if (*frames_cmd) {
      const fs::path in(frames_in);
      const EventStream s =
          in.extension() == ".csv" ? read_events_csv(in, csv_width, csv_height) : read_events(in);
      write_frames(accumulate_frames(s, frame_count, frames_binarize), frames_out);
    } else if (*train_cmd) {
      const Dataset data = read_dataset(data_dir);
      const auto& m = data.manifest;
      const FrameSequence& probe = data.frames.at(0);
      NetworkConfig cfg =
          g.config.empty()
              ? preset_network(variant, static_cast<int>(m.classes.size()), m.spec.total_frames,
                               {static_cast<int>(probe.channels()), static_cast<int>(probe.height()),
                                static_cast<int>(probe.width())},
                               m.spec.seed)
              : NetworkConfig::from_json(slurp(g.config));
      if (g.seed) cfg.seed = *g.seed;
      if (epochs) cfg.epochs = *epochs;
      if (lr) cfg.lr = *lr;
      Network net(cfg);
      const TrainResult result = train(net, data, TrainConfig::from_network(cfg), [](const EpochLog& e) {
        std::cout << fmt::format("epoch {:3d}  loss {:.4f}  acc {:.4f}  val_loss {:.4f}  val_acc {:.4f}\n",
                                 e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy);
      });
      save_checkpoint(net, ckpt);
      std::cout << fmt::format("best epoch {}, saved {}\n", result.best_epoch, ckpt);
      if (!log_path.empty()) {
        nlohmann::json log = nlohmann::json::array();
        for (const auto& e : result.log) {
          log.push_back({{"epoch", e.epoch},
                         {"train_loss", e.train_loss},
                         {"train_accuracy", e.train_accuracy},
                         {"val_loss", e.val_loss},
                         {"val_accuracy", e.val_accuracy},
                         {"best_val_loss", e.best_val_loss}});
        }
        spit(log_path, log.dump(2) + "\n");
      }
    } else if (*eval_cmd || *ablate_cmd) {
      const Dataset data = read_dataset(data_dir);
      const LabeledSet set = labeled_split(data, split_from_string(split));
      Network net = load_checkpoint(ckpt);
      const bool rep = data.manifest.spec.repetition;
      Metrics m = *eval_cmd ? evaluate(net, set, data.manifest.classes, rep)
                            : ablate_and_eval(net, NormComponents::parse(keep), set,
                                              data.manifest.classes, rep);
      if (rep) m.p_d = no_order_baseline(data.manifest.spec.gestures, data.manifest.spec.length);
      print_metrics(m);
      if (!json_out.empty()) spit(json_out, m.to_json() + "\n");
    } else if (*baseline) {
      const Rational r = no_order_baseline_exact(bn, bl);
      std::cout << fmt::format("{:.4f} ({}/{})\n", r.value(), r.num, r.den);
    } else if (*analyze) {
      attention.normalized = !unnormalized;
      const Network net = load_checkpoint(ckpt);
      const auto profiles = export_attention(net, attention);
      fs::create_directories(analyze_out);
      for (const auto& p : write_attention_csv(profiles, analyze_out)) std::cout << p.string() << "\n";
    } else if (*gradcheck) {
      NetworkConfig cfg = g.config.empty() ? gradcheck_network(gc_steps) : NetworkConfig::from_json(slurp(g.config));
      cfg.neuron.spike_function = SpikeFunction::kSoft;
      if (g.seed) {
        cfg.seed = *g.seed;
        gc.seed = *g.seed;
      }
      Network net(cfg);
      const GradcheckReport report = gradient_check(net, gc);
      for (const auto& p : report.probes) {
        std::cout << fmt::format("{:<24} {:6d} {:+.6e} {:+.6e} {:.2e}\n", p.name, p.index, p.analytic,
                                 p.numeric, p.rel_error);
      }
      std::cout << fmt::format("max relative error {:.3e} (tolerance {:.1e})\n", report.max_rel_error, tolerance);
      return report.max_rel_error <= tolerance ? EXIT_SUCCESS : EXIT_FAILURE;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return EXIT_FAILURE;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
