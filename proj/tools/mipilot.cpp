#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "mipilot/atcnet.hpp"
#include "mipilot/binary_io.hpp"
#include "mipilot/config.hpp"
#include "mipilot/dsp.hpp"
#include "mipilot/manifest.hpp"
#include "mipilot/net.hpp"
#include "mipilot/offline.hpp"
#include "mipilot/realtime.hpp"
#include "mipilot/session.hpp"
#include "mipilot/synth.hpp"
#include "mipilot/training.hpp"

using namespace mipilot;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Seed from the flag, else MIPILOT_SEED, else `fallback`.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback = 0) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MIPILOT_SEED")) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ArgumentError("MIPILOT_SEED must be an unsigned integer");
    return v;
  }
  return fallback;
}

config::ConfigFile load_config(const std::string& path) {
  return path.empty() ? config::ConfigFile{} : config::ConfigFile::load(path);
}

void write_text(const std::string& path, const std::string& text) {
  io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

json read_json(const std::string& path) {
  const auto bytes = io::read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<windowing::LabeledWindow> read_datasets(const std::vector<std::string>& paths) {
  std::vector<windowing::LabeledWindow> all;
  for (const auto& p : paths)
    for (auto& w : windowing::read_dataset(p)) all.push_back(std::move(w));
  return all;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------------------------

struct DesignFilterArgs {
  std::string config, out, response;
  std::optional<int> order, grid_points;
  std::optional<double> cutoff_hz, rate_hz;
  int response_points = 501;
};

int design_filter(const DesignFilterArgs& a) {
  auto cfg = load_config(a.config);
  if (a.order) cfg.set("filter.order", std::to_string(*a.order));
  if (a.cutoff_hz) cfg.set("filter.cutoff_hz", fmt(*a.cutoff_hz));
  if (a.rate_hz) cfg.set("filter.sample_rate_hz", fmt(*a.rate_hz));
  if (a.grid_points) cfg.set("filter.grid_points", std::to_string(*a.grid_points));
  const auto spec = config::filter_spec(cfg);
  const auto filter = dsp::design_highpass_ls(spec);
  std::vector<std::uint8_t> bytes;
  for (double t : filter.taps()) io::put<double>(bytes, t);
  io::write_file(a.out, bytes);

  manifest::RunManifest m;
  m.command = "design-filter";
  m.config = {{"order", spec.order},
              {"cutoff_hz", spec.cutoff_hz},
              {"sample_rate_hz", spec.sample_rate_hz},
              {"grid_points", spec.grid_points},
              {"transition_fraction", spec.transition_fraction}};
  if (!a.config.empty()) m.inputs.push_back(a.config);
  m.outputs.push_back(a.out);
  if (!a.response.empty()) {
    if (a.response_points < 2) throw ArgumentError("--response-points must be at least 2");
    std::vector<double> freqs;
    const double nyquist = spec.sample_rate_hz / 2;
    for (int i = 0; i < a.response_points; ++i) freqs.push_back(nyquist * i / (a.response_points - 1));
    const auto h = dsp::frequency_response(filter, freqs);
    std::string csv = "freq_hz,magnitude,phase_rad\n";
    for (std::size_t i = 0; i < h.size(); ++i)
      csv += fmt(freqs[i]) + "," + fmt(std::abs(h[i])) + "," + fmt(std::arg(h[i])) + "\n";
    write_text(a.response, csv);
    m.outputs.push_back(a.response);
  }
  m.write();
  std::cerr << "designed " << filter.taps().size() << " taps, DC gain " << filter.dc_gain() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct PlanArgs {
  int datasets = 1;
  std::optional<std::uint64_t> seed;
  double gap_seconds = 0;
  std::string out;
};

int plan(const PlanArgs& a) {
  const auto seed = resolve_seed(a.seed);
  auto p = session::generate_plan(a.datasets, seed);
  if (a.gap_seconds < 0) throw ArgumentError("--gap-seconds must be non-negative");
  p.inter_sequence_gap_seconds = a.gap_seconds;
  write_text(a.out, p.to_json().dump(2) + "\n");
  manifest::RunManifest m;
  m.command = "plan";
  m.config = {{"datasets", a.datasets}, {"gap_seconds", a.gap_seconds}};
  m.seeds = {{"plan", seed}};
  m.outputs.push_back(a.out);
  m.write();
  std::cerr << "plan: " << p.runs.size() << " runs, " << p.cues().size() << " tasks, "
            << p.total_samples() << " samples\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct SynthArgs {
  std::string plan, profile = "userA_day0", out;
  std::optional<int> dataset;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise_sigma, drift;
};

int synth(const SynthArgs& a) {
  auto p = session::SessionPlan::from_json(read_json(a.plan));
  if (a.dataset) p = p.dataset(*a.dataset);
  auto cfg = session::profile(a.profile);
  if (a.seed) cfg.seed = *a.seed;
  if (a.noise_sigma) cfg.noise_sigma_uv = *a.noise_sigma;
  if (a.drift) cfg.drift_uv_per_s = *a.drift;
  const auto rec = session::synth_eeg(p, cfg);
  session::write_recording(a.out, rec);
  manifest::RunManifest m;
  m.command = "synth";
  m.config = {{"profile", a.profile},
              {"dataset", a.dataset ? json(*a.dataset) : json(nullptr)},
              {"noise_sigma_uv", cfg.noise_sigma_uv},
              {"drift_uv_per_s", cfg.drift_uv_per_s}};
  m.seeds = {{"plan", p.seed}, {"synth", cfg.seed}};
  m.inputs.push_back(a.plan);
  m.outputs.push_back(a.out);
  m.write();
  std::cerr << "synth: " << rec.sample_count() << " frames, " << rec.cues.size() << " cues\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct CutArgs {
  std::vector<std::string> recordings;
  std::string config, out;
  std::optional<int> window;
  bool keep_first = false, unbalanced = false;
  std::optional<std::uint64_t> seed;
};

int cut_windows(const CutArgs& a) {
  const auto cfg = load_config(a.config);
  const auto filter = dsp::design_highpass_ls(config::filter_spec(cfg));
  const int W = a.window ? *a.window : config::model_config(cfg).samples;
  const auto seed = resolve_seed(a.seed);
  std::vector<windowing::LabeledWindow> all;
  for (std::size_t i = 0; i < a.recordings.size(); ++i) {
    const auto rec = session::read_recording(a.recordings[i]);
    auto cut = offline::cut_windows(rec, filter, W, !a.keep_first);
    auto windows = a.unbalanced ? std::move(cut.windows)
                                : windowing::balance_classes(std::move(cut.windows), seed + i);
    for (auto& w : windows) all.push_back(std::move(w));
  }
  windowing::write_dataset(a.out, all);
  const auto counts = windowing::class_counts(all);
  manifest::RunManifest m;
  m.command = "cut-windows";
  m.config = {{"window", W},
              {"exclude_first_window", !a.keep_first},
              {"balanced", !a.unbalanced},
              {"config", cfg.to_json()},
              {"class_counts", counts}};
  m.seeds = {{"balance", seed}};
  m.inputs = a.recordings;
  if (!a.config.empty()) m.inputs.push_back(a.config);
  m.outputs.push_back(a.out);
  m.write();
  std::cerr << "cut-windows: " << all.size() << " windows (N " << counts[0] << ", R " << counts[1]
            << ", L " << counts[2] << ", K " << counts[3] << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct TrainArgs {
  std::string mode = "pretrain", config, init, out, loss_csv;
  std::vector<std::string> data;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
};

int train(const TrainArgs& a) {
  const auto cfg = load_config(a.config);
  const bool finetune = a.mode == "finetune";
  if (!finetune && a.mode != "pretrain") throw ArgumentError("--mode must be pretrain or finetune");
  if (finetune && a.init.empty()) throw ArgumentError("fine-tuning needs --init <pretrained model>");
  auto tc = config::train_config(cfg, a.mode, finetune ? training::TrainConfig::finetune_default()
                                                       : training::TrainConfig::pretrain_default());
  if (a.epochs) tc.epochs = *a.epochs;
  tc.seed = resolve_seed(a.seed, tc.seed);
  tc.validate();

  auto model = a.init.empty() ? atcnet::AtcNet<float>(config::model_config(cfg))
                              : atcnet::AtcNet<float>::from_checkpoint(tensor::load_checkpoint(a.init));
  const auto data = read_datasets(a.data);
  training::TrainResult r;
  if (finetune) {
    model.freeze_for_finetune();
    r = training::finetune(model, std::span<const windowing::LabeledWindow>(data), tc);
    model.unfreeze_all();
  } else {
    r = training::pretrain(model, std::span<const windowing::LabeledWindow>(data), tc);
  }
  tensor::save_checkpoint(a.out, model.to_checkpoint());

  manifest::RunManifest m;
  m.command = "train";
  m.config = {{"mode", a.mode},
              {"epochs", tc.epochs},
              {"batch_size", tc.batch_size},
              {"lr", tc.lr},
              {"weight_decay", tc.weight_decay},
              {"shuffle", tc.shuffle},
              {"model", model.config().to_text()},
              {"windows", data.size()},
              {"epoch_loss", r.epoch_loss}};
  m.seeds = {{"train", tc.seed}, {"init", model.config().init_seed}};
  m.inputs = a.data;
  if (!a.init.empty()) m.inputs.push_back(a.init);
  if (!a.config.empty()) m.inputs.push_back(a.config);
  m.outputs.push_back(a.out);
  if (!a.loss_csv.empty()) {
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) csv += std::to_string(e + 1) + "," + fmt(r.epoch_loss[e]) + "\n";
    write_text(a.loss_csv, csv);
    m.outputs.push_back(a.loss_csv);
  }
  m.write();
  std::cerr << "train (" << a.mode << "): " << data.size() << " windows, " << tc.epochs << " epochs";
  if (!r.epoch_loss.empty()) std::cerr << ", final loss " << r.epoch_loss.back();
  std::cerr << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct EvalArgs {
  std::string model, report;
  std::vector<std::string> data;
};

int eval(const EvalArgs& a) {
  auto model = atcnet::AtcNet<float>::from_checkpoint(tensor::load_checkpoint(a.model));
  std::vector<std::vector<windowing::LabeledWindow>> runs;
  for (const auto& p : a.data) runs.push_back(windowing::read_dataset(p));
  std::vector<windowing::LabeledWindow> all;
  for (const auto& r : runs) all.insert(all.end(), r.begin(), r.end());
  auto report = training::evaluate(model, std::span<const windowing::LabeledWindow>(all));
  // Each data file is one timeline row.
  report.run_timeline =
      training::per_run_timeline(model, std::span<const std::vector<windowing::LabeledWindow>>(runs));
  write_text(a.report, report.to_json().dump(2) + "\n");
  manifest::RunManifest m;
  m.command = "eval";
  m.inputs = a.data;
  m.inputs.push_back(a.model);
  m.outputs.push_back(a.report);
  m.write();
  std::cout << "accuracy " << fmt(report.accuracy) << " on " << all.size() << " windows\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct RunArgs {
  std::string model, source, robot, stats, config;
  bool live = false, paced = false, keep_first = false;
};

int run(const RunArgs& a) {
  const auto cfg = load_config(a.config);
  const auto filter = dsp::design_highpass_ls(config::filter_spec(cfg));
  auto model = atcnet::AtcNet<float>::from_checkpoint(tensor::load_checkpoint(a.model));
  realtime::DecoderRuntime<float> runtime(filter, std::move(model));

  realtime::PipelineOptions opt;
  opt.live = a.live;
  opt.exclude_first_window = !a.keep_first;
  std::optional<session::Recording> rec;
  std::unique_ptr<realtime::FrameSource> source;
  if (a.source.starts_with("tcp:")) {
    source = std::make_unique<realtime::TcpFrameSource>(net::parse_endpoint(a.source));
  } else {
    rec = session::read_recording(a.source);
    opt.segments = rec->segments();
    source = std::make_unique<realtime::RecordingSource>(*rec, a.paced);
  }
  std::optional<net::RobotClient> robot;
  if (!a.robot.empty()) {
    const auto ep = net::parse_endpoint(a.robot);
    // The simulator may still be starting up.
    for (int attempt = 0;; ++attempt) {
      try {
        robot = net::RobotClient::connect_robot(ep);
        break;
      } catch (const ProtocolError&) {
        throw;
      } catch (const std::exception&) {
        if (attempt >= 50) throw;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
    }
  }
  const auto stats = realtime::run_pipeline(
      *source, runtime,
      [&](const realtime::CommandMsg& c) {
        if (robot) robot->send({c.seq, c.t_ms, c.cmd});
      },
      opt);
  if (robot) robot->close();
  write_text(a.stats, stats.to_json().dump(2) + "\n");

  manifest::RunManifest m;
  m.command = "run";
  m.config = {{"source", a.source},
              {"robot", a.robot},
              {"live", a.live},
              {"paced", a.paced},
              {"exclude_first_window", !a.keep_first}};
  m.inputs.push_back(a.model);
  if (rec) m.inputs.push_back(a.source);
  if (!a.config.empty()) m.inputs.push_back(a.config);
  m.outputs.push_back(a.stats);
  m.write();
  std::cerr << "run: " << stats.frames << " frames, " << stats.commands.size() << " commands, "
            << stats.dropped_ticks << " dropped ticks";
  if (stats.score) std::cerr << ", accuracy " << stats.score->accuracy;
  std::cerr << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct ServeArgs {
  std::string listen = "tcp:127.0.0.1:7001", pose_log, config;
  int sessions = 1;
};

int serve_robot(const ServeArgs& a) {
  const auto motion = config::motion_config(load_config(a.config));
  if (a.sessions < 1) throw ArgumentError("--sessions must be positive");
  net::TcpListener listener(net::parse_endpoint(a.listen));
  std::cerr << "serve-robot: listening on port " << listener.port() << std::endl;
  std::ofstream log;
  if (!a.pose_log.empty()) {
    log.open(a.pose_log, std::ios::binary);
    if (!log) throw FormatError("cannot open '" + a.pose_log + "' for writing");
    log << "t_ms,x,y,yaw\n";
  }
  const auto last = net::serve_robot(listener, motion, a.sessions, [&](std::int64_t t, const robot::RobotState& s) {
    if (log.is_open()) log << t << "," << fmt(s.x) << "," << fmt(s.y) << "," << fmt(s.yaw) << "\n";
  });
  if (log.is_open()) {
    log.close();
    manifest::RunManifest m;
    m.command = "serve-robot";
    m.config = {{"listen", a.listen},
                {"sessions", a.sessions},
                {"yaw_rate", motion.yaw_rate},
                {"forward_speed", motion.forward_speed}};
    m.outputs.push_back(a.pose_log);
    m.write();
  }
  std::cerr << "serve-robot: final pose x=" << fmt(last.x) << " y=" << fmt(last.y) << " yaw=" << fmt(last.yaw) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct ReplayReportArgs {
  std::string stats, runs_csv, timeline_csv;
};

int replay_report(const ReplayReportArgs& a) {
  const auto s = read_json(a.stats);
  if (s.value("format", "") != "mipilot-stats/1") throw FormatError(a.stats + ": not a stats file");
  try {
    std::string timeline = "seq,t_ms,end_index,truth,predicted,scored,p_N,p_R,p_L,p_K\n";
    std::size_t rows = 0;
    for (const auto& t : s.at("ticks")) {
      std::string truth = t.contains("truth") && !t["truth"].is_null() ? t["truth"].get<std::string>() : "";
      const bool scored = t.value("scored", false);
      timeline += std::to_string(t.at("seq").get<std::int64_t>()) + "," +
                  std::to_string(t.at("t_ms").get<std::int64_t>()) + "," +
                  std::to_string(t.at("end_index").get<std::int64_t>()) + "," + truth + "," +
                  t.at("cmd").get<std::string>() + "," + (scored ? "1" : "0");
      for (const auto& p : t.at("probs")) timeline += "," + fmt(p.get<double>());
      timeline += "\n";
      ++rows;
    }
    std::string runs = "run,accuracy\n";
    std::size_t run_rows = 0;
    if (s.contains("score"))
      for (const auto& r : s["score"].at("timeline")) {
        runs += std::to_string(r.at("run").get<int>()) + "," + fmt(r.at("accuracy").get<double>()) + "\n";
        ++run_rows;
      }
    manifest::RunManifest m;
    m.command = "replay-report";
    m.inputs.push_back(a.stats);
    if (!a.timeline_csv.empty()) {
      write_text(a.timeline_csv, timeline);
      m.outputs.push_back(a.timeline_csv);
    }
    if (!a.runs_csv.empty()) {
      write_text(a.runs_csv, runs);
      m.outputs.push_back(a.runs_csv);
    }
    if (!m.outputs.empty()) m.write();

    std::cout << "frames:        " << s.value("frames", 0) << "\n"
              << "commands:      " << rows << "\n"
              << "dropped ticks: " << s.value("dropped_ticks", 0) << "\n";
    if (s.contains("inference_ms") && s["inference_ms"].contains("mean"))
      std::cout << "inference ms:  mean " << s["inference_ms"]["mean"].get<double>() << ", max "
                << s["inference_ms"]["max"].get<double>() << "\n";
    if (s.contains("score")) {
      std::cout << "accuracy:      " << s["score"].at("accuracy").get<double>() << "\n";
      for (const auto& r : s["score"].at("timeline"))
        std::cout << "  run " << r.at("run").get<int>() << ": " << r.at("accuracy").get<double>() << "\n";
    }
    std::cout << "runs:          " << run_rows << "\n";
  } catch (const json::exception& e) {
    throw FormatError(a.stats + ": " + e.what());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motor-imagery decoder pipeline: filter design, synthetic sessions, training, "
               "evaluation, real-time decoding and robot simulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(manifest::kToolVersion));
  std::function<int()> action;

  DesignFilterArgs df;
  auto* c_df = app.add_subcommand("design-filter", "Design the FIR high-pass and write its taps");
  c_df->add_option("--config", df.config, "Config file ([filter] section)");
  c_df->add_option("--order", df.order, "Filter order (taps - 1)");
  c_df->add_option("--cutoff-hz", df.cutoff_hz, "Stopband edge in Hz");
  c_df->add_option("--rate-hz", df.rate_hz, "Sample rate in Hz");
  c_df->add_option("--grid-points", df.grid_points, "Least-squares frequency grid size");
  c_df->add_option("--out", df.out, "Taps file (little-endian f64)")->required();
  c_df->add_option("--response", df.response, "Frequency response CSV");
  c_df->add_option("--response-points", df.response_points, "Rows in the response CSV");
  c_df->callback([&] { action = [&] { return design_filter(df); }; });

  PlanArgs pa;
  auto* c_plan = app.add_subcommand("plan", "Generate a seeded session plan");
  c_plan->add_option("--datasets", pa.datasets, "Number of datasets (6 runs each)")->check(CLI::PositiveNumber);
  c_plan->add_option("--seed", pa.seed, "Plan seed (default: MIPILOT_SEED or 0)");
  c_plan->add_option("--gap-seconds", pa.gap_seconds, "Pause between sequences");
  c_plan->add_option("--out", pa.out, "Plan JSON")->required();
  c_plan->callback([&] { action = [&] { return plan(pa); }; });

  SynthArgs sa;
  auto* c_synth = app.add_subcommand("synth", "Synthesize an EEG recording for a plan");
  c_synth->add_option("--plan", sa.plan, "Plan JSON")->required();
  c_synth->add_option("--profile", sa.profile, "Profile user<ID>_day<N>");
  c_synth->add_option("--dataset", sa.dataset, "Only this dataset of the plan");
  c_synth->add_option("--seed", sa.seed, "Override the profile noise seed");
  c_synth->add_option("--noise-sigma", sa.noise_sigma, "White noise in uV");
  c_synth->add_option("--drift", sa.drift, "Linear drift in uV/s");
  c_synth->add_option("--out", sa.out, "Recording (.eegr)")->required();
  c_synth->callback([&] { action = [&] { return synth(sa); }; });

  CutArgs ca;
  auto* c_cut = app.add_subcommand("cut-windows", "Filter recordings and cut labeled windows");
  c_cut->add_option("--recording", ca.recordings, "Recording files")->required();
  c_cut->add_option("--config", ca.config, "Config file ([filter], [model])");
  c_cut->add_option("--window", ca.window, "Window length (default: model samples)");
  c_cut->add_flag("--keep-first", ca.keep_first, "Keep the first window of every task");
  c_cut->add_flag("--unbalanced", ca.unbalanced, "Skip class balancing");
  c_cut->add_option("--seed", ca.seed, "Balancing seed (default: MIPILOT_SEED or 0)");
  c_cut->add_option("--out", ca.out, "Dataset (.mids)")->required();
  c_cut->callback([&] { action = [&] { return cut_windows(ca); }; });

  TrainArgs ta;
  auto* c_train = app.add_subcommand("train", "Pretrain or fine-tune a model");
  c_train->add_option("--mode", ta.mode, "pretrain | finetune")->check(CLI::IsMember({"pretrain", "finetune"}));
  c_train->add_option("--data", ta.data, "Dataset files")->required();
  c_train->add_option("--config", ta.config, "Config file ([model], [pretrain], [finetune])");
  c_train->add_option("--init", ta.init, "Starting checkpoint (required for finetune)");
  c_train->add_option("--epochs", ta.epochs, "Override the epoch count");
  c_train->add_option("--seed", ta.seed, "Shuffle/dropout seed (default: config, MIPILOT_SEED, 0)");
  c_train->add_option("--loss-csv", ta.loss_csv, "Per-epoch loss CSV");
  c_train->add_option("--out", ta.out, "Checkpoint (.miwt)")->required();
  c_train->callback([&] { action = [&] { return train(ta); }; });

  EvalArgs ea;
  auto* c_eval = app.add_subcommand("eval", "Score a model on labeled windows");
  c_eval->add_option("--model", ea.model, "Checkpoint")->required();
  c_eval->add_option("--data", ea.data, "Dataset files (one timeline row each)")->required();
  c_eval->add_option("--report", ea.report, "Report JSON")->required();
  c_eval->callback([&] { action = [&] { return eval(ea); }; });

  RunArgs ra;
  auto* c_run = app.add_subcommand("run", "Decode a stream and drive the robot");
  c_run->add_option("--model", ra.model, "Checkpoint")->required();
  c_run->add_option("--source", ra.source, "Recording file or tcp:<host>:<port>")->required();
  c_run->add_option("--robot", ra.robot, "Robot simulator tcp:<host>:<port>");
  c_run->add_option("--stats", ra.stats, "Stats JSON")->required();
  c_run->add_option("--config", ra.config, "Config file ([filter])");
  c_run->add_flag("--live", ra.live, "Threaded ingestion; late ticks are dropped");
  c_run->add_flag("--paced", ra.paced, "Play a recording at its sample rate");
  c_run->add_flag("--keep-first", ra.keep_first, "Score the first window of every task too");
  c_run->callback([&] { action = [&] { return run(ra); }; });

  ServeArgs va;
  auto* c_serve = app.add_subcommand("serve-robot", "Run the robot simulator server");
  c_serve->add_option("--listen", va.listen, "tcp:<host>:<port> (port 0 picks one)");
  c_serve->add_option("--pose-log", va.pose_log, "Pose CSV (t_ms,x,y,yaw)");
  c_serve->add_option("--sessions", va.sessions, "Connections to serve before exiting");
  c_serve->add_option("--config", va.config, "Config file ([robot])");
  c_serve->callback([&] { action = [&] { return serve_robot(va); }; });

  ReplayReportArgs rr;
  auto* c_rr = app.add_subcommand("replay-report", "Summarize a run and write CSV timelines");
  c_rr->add_option("--stats", rr.stats, "Stats JSON from run")->required();
  c_rr->add_option("--runs-csv", rr.runs_csv, "Per-run accuracy CSV (run,accuracy)");
  c_rr->add_option("--timeline-csv", rr.timeline_csv, "Per-tick CSV");
  c_rr->callback([&] { action = [&] { return replay_report(rr); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* shown = &app;
    for (const auto* sub : app.get_subcommands()) shown = sub;
    std::cerr << shown->help();
    return kUsage;
  }

  try {
    return action();
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DesignError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
