// ceb: command-line front end for the segmentation pipeline.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <list>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ceb/ceb.hpp"

namespace fs = std::filesystem;
using namespace ceb;

namespace {

// Thrown for problems the user can fix on the command line.
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat `key = value` file. Keys are long option names; `_` and `-` are interchangeable.
std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file '" + path.string() + "'");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw usage_error(path.string() + ":" + std::to_string(n) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

// Values from the file fill only options that were not given on the command line.
void apply_config(CLI::App& sub, const std::string& config_path) {
  if (config_path.empty()) return;
  for (const auto& [key, value] : read_config_file(config_path)) {
    if (key == "config" || key == "help") throw usage_error("config key '" + key + "' is not allowed");
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw usage_error("unknown config key '" + key + "' for '" + sub.get_name() + "'");
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw usage_error("config key '" + key + "': " + e.what());
    }
  }
}

std::vector<fs::path> list_dir(const fs::path& dir, std::initializer_list<const char*> exts) {
  if (!fs::is_directory(dir)) throw io_error("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (std::any_of(exts.begin(), exts.end(), [&](const char* x) { return ext == x; })) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// A file, or every raster in a directory (lexicographic order).
std::vector<fs::path> expand_inputs(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    if (fs::is_directory(a)) {
      auto files = list_dir(a, {".cebp", ".pgm"});
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.emplace_back(a);
    }
  }
  return out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create '" + dir.string() + "': " + ec.message());
}

// ---------------------------------------------------------------------------
// Shared option groups.

struct pipeline_flags {
  pipeline_config cfg;
  std::string conn = "8";
  std::string mode = "ceb";
  std::string rim = "higher-mean";

  void add(CLI::App& sub, bool with_mode) {
    sub.add_option("--quantization-step", cfg.quantization_step, "Threshold merge step")->capture_default_str();
    sub.add_option("--min-area", cfg.min_area, "Smallest seed area in pixels")->capture_default_str();
    sub.add_option("--connectivity", conn, "Pixel connectivity")
        ->check(CLI::IsMember({"4", "8"}))
        ->capture_default_str();
    sub.add_option("--foreground-threshold", cfg.foreground_threshold, "Foreground cut on the probability map")
        ->capture_default_str();
    sub.add_option("--canvas", cfg.signature.canvas, "Signature raster side")->capture_default_str();
    sub.add_option("--branch-length", cfg.signature.branch_length, "Pixels kept per fork branch")
        ->capture_default_str();
    sub.add_option("--boundary-threshold", cfg.boundary_threshold, "Score at or above which a boundary is true")
        ->capture_default_str();
    sub.add_option("--max-nodes", cfg.limits.max_nodes, "Largest component enumerated")->capture_default_str();
    sub.add_option("--max-candidates", cfg.limits.max_candidates, "Candidate cap per frame")->capture_default_str();
    sub.add_option("--min-score", cfg.solver.min_score, "Pairs scoring below this are left out")
        ->capture_default_str();
    sub.add_option("--node-budget", cfg.solver.node_budget, "Search node limit per component (0 = none)")
        ->capture_default_str();
    sub.add_option("--rim", rim, "Rim pixel policy")
        ->check(CLI::IsMember({"higher-mean", "unassigned"}))
        ->capture_default_str();
    if (with_mode)
      sub.add_option("--mode", mode, "ceb scores boundaries; wo-cls takes every boundary as true")
          ->check(CLI::IsMember({"ceb", "wo-cls"}))
          ->capture_default_str();
  }

  pipeline_config resolve() {
    cfg.conn = conn == "4" ? connectivity::four : connectivity::eight;
    cfg.mode = mode == "wo-cls" ? pipeline_mode::ceb_wo_cls : pipeline_mode::ceb;
    cfg.rim = rim == "unassigned" ? rim_policy::unassigned : rim_policy::higher_mean_probability;
    cfg.validate();
    return cfg;
  }
};

struct scorer_flags {
  std::string model;
  std::string scores;

  void add(CLI::App& sub) {
    sub.add_option("--model", model, "Trained CEBM model");
    sub.add_option("--scores", scores, "External signature_id,score CSV");
  }

  std::unique_ptr<boundary_scorer> make(const pipeline_config& cfg) const {
    if (!model.empty() && !scores.empty()) throw usage_error("give either --model or --scores, not both");
    if (!model.empty()) return std::make_unique<model_scorer>(load_model(model));
    if (!scores.empty()) return std::make_unique<external_scorer>(read_external_scores(scores));
    if (cfg.mode == pipeline_mode::ceb_wo_cls) return std::make_unique<constant_scorer>(1.0);
    throw usage_error("a scorer is required: --model, --scores, or --mode wo-cls");
  }
};

struct temporal_flags {
  temporal_config cfg;
  void add(CLI::App& sub) {
    sub.add_option("--sigma-low", cfg.sigma_low, "Scores below this are false boundaries")->capture_default_str();
    sub.add_option("--sigma-high", cfg.sigma_high, "Scores above this are true boundaries")->capture_default_str();
    sub.add_option("--iterations", cfg.iterations, "Propagation iterations")->capture_default_str();
    sub.add_flag("--sweep", cfg.sweep, "Update frames in order within an iteration");
  }
  temporal_config resolve(const pipeline_config& p) {
    cfg.limits = p.limits;
    cfg.solver = p.solver;
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Commands.

// Kept in a std::list: options bind to `config` by address.
struct command {
  explicit command(CLI::App* a) : app(a) {}
  CLI::App* app;
  std::string config;
  std::function<void()> run;
};

void add_config(command& c) {
  c.app->add_option("--config", c.config, "Flat key = value file; command-line flags take precedence");
}

void add_jobs(CLI::App& sub, std::size_t& jobs) {
  sub.add_option("--jobs", jobs, "Frames processed in parallel")->capture_default_str()->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance segmentation of cells from probability maps"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::list<command> commands;

  // segment
  pipeline_flags seg_p;
  scorer_flags seg_s;
  std::string seg_in, seg_out;
  std::size_t seg_frame = 0;
  {
    auto& c = commands.emplace_back(app.add_subcommand("segment", "Segment one probability map"));
    c.app->add_option("--probmap", seg_in, "Input probability map (CEBP or 16-bit PGM)")->required();
    c.app->add_option("--out", seg_out, "Output label map (16-bit PGM)")->required();
    c.app->add_option("--frame", seg_frame, "Frame index used in signature ids")->capture_default_str();
    seg_p.add(*c.app, true);
    seg_s.add(*c.app);
    add_config(c);
    c.run = [&] {
      const auto cfg = seg_p.resolve();
      const auto scorer = seg_s.make(cfg);
      write_labelmap(segment_frame(read_probmap(seg_in), *scorer, cfg, seg_frame), seg_out);
    };
  }

  // segment-video
  pipeline_flags vid_p;
  scorer_flags vid_s;
  temporal_flags vid_t;
  std::string vid_in, vid_out;
  std::size_t vid_jobs = 1;
  bool vid_per_frame = false;
  {
    auto& c = commands.emplace_back(app.add_subcommand("segment-video", "Segment a frame sequence with temporal refinement"));
    c.app->add_option("--frames", vid_in, "Directory of frames, taken in lexicographic order")->required();
    c.app->add_option("--out-dir", vid_out, "Directory for label maps (same file stems)")->required();
    c.app->add_flag("--per-frame", vid_per_frame, "Skip temporal refinement");
    vid_p.add(*c.app, true);
    vid_s.add(*c.app);
    vid_t.add(*c.app);
    add_jobs(*c.app, vid_jobs);
    add_config(c);
    c.run = [&] {
      const auto pcfg = vid_p.resolve();
      const auto tcfg = vid_t.resolve(pcfg);
      const auto scorer = vid_s.make(pcfg);
      const auto files = list_dir(vid_in, {".cebp", ".pgm"});
      if (files.empty()) throw io_error("no frames found in '" + vid_in + "'");
      std::vector<prob_map> frames(files.size());
      parallel_for(files.size(), vid_jobs, [&](std::size_t w) { frames[w] = read_probmap(files[w]); });
      std::vector<label_map> out(files.size());
      if (vid_per_frame || pcfg.mode == pipeline_mode::ceb_wo_cls) {
        parallel_for(files.size(), vid_jobs,
                     [&](std::size_t w) { out[w] = segment_frame(frames[w], *scorer, pcfg, w); });
      } else {
        out = segment_video(frames, *scorer, pcfg, tcfg, vid_jobs);
      }
      make_dir(vid_out);
      for (std::size_t w = 0; w < files.size(); ++w)
        write_labelmap(out[w], fs::path(vid_out) / (files[w].stem().string() + ".pgm"));
    };
  }

  // make-training
  pipeline_flags mt_p;
  std::vector<std::string> mt_prob, mt_truth;
  std::string mt_out, mt_dump;
  std::size_t mt_jobs = 1;
  {
    auto& c = commands.emplace_back(app.add_subcommand("make-training", "Label boundary signatures against ground truth"));
    c.app->add_option("--probmap", mt_prob, "Probability maps (files or directories)")->required();
    c.app->add_option("--truth", mt_truth, "Ground-truth label maps, paired in order")->required();
    c.app->add_option("--out-dir", mt_out, "Directory for signatures and manifest.csv")->required();
    c.app->add_option("--dump-model", mt_dump, "Write each frame's matching model as CPLEX-LP text here");
    mt_p.add(*c.app, false);
    add_jobs(*c.app, mt_jobs);
    add_config(c);
    c.run = [&] {
      const auto cfg = mt_p.resolve();
      const auto probs = expand_inputs(mt_prob);
      const auto truths = expand_inputs(mt_truth);
      if (probs.size() != truths.size())
        throw precondition_error(std::to_string(probs.size()) + " probability maps but " +
                                 std::to_string(truths.size()) + " ground-truth maps");
      std::vector<training_set> sets(probs.size());
      parallel_for(probs.size(), mt_jobs, [&](std::size_t w) {
        sets[w] = make_training_set(read_probmap(probs[w]), read_labelmap(truths[w]), cfg, w);
      });
      std::vector<signature_record> all;
      for (std::size_t w = 0; w < sets.size(); ++w) {
        for (const auto& msg : sets[w].warnings) std::cerr << "warning: " << msg << "\n";
        all.insert(all.end(), sets[w].records.begin(), sets[w].records.end());
      }
      write_signature_set(all, mt_out);
      if (!mt_dump.empty()) {
        std::ofstream os(mt_dump, std::ios::trunc);
        if (!os) throw io_error("cannot open '" + mt_dump + "' for writing");
        for (std::size_t w = 0; w < sets.size(); ++w) {
          const auto& s = sets[w];
          const auto pb =
              detail::region_packing(s.gi_scores.rows(), s.candidates, index_candidates(s.candidates), s.gi_scores);
          dump_model(os, pb, "frame " + std::to_string(w) + " (" + probs[w].string() + ")", cfg.solver);
        }
      }
      std::cerr << all.size() << " labelled signatures from " << sets.size() << " frame(s)\n";
    };
  }

  // extract-signatures
  pipeline_flags ex_p;
  std::vector<std::string> ex_prob;
  std::string ex_out;
  std::size_t ex_jobs = 1;
  {
    auto& c = commands.emplace_back(app.add_subcommand("extract-signatures", "Write unlabelled boundary signatures"));
    c.app->add_option("--probmap", ex_prob, "Probability maps (files or directories)")->required();
    c.app->add_option("--out-dir", ex_out, "Directory for signatures and manifest.csv")->required();
    ex_p.add(*c.app, false);
    add_jobs(*c.app, ex_jobs);
    add_config(c);
    c.run = [&] {
      auto cfg = ex_p.resolve();
      const auto probs = expand_inputs(ex_prob);
      std::vector<std::vector<signature_record>> per(probs.size());
      parallel_for(probs.size(), ex_jobs,
                   [&](std::size_t w) { per[w] = analyze_frame(read_probmap(probs[w]), cfg, w).signatures; });
      std::vector<signature_record> all;
      for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
      write_signature_set(all, ex_out);
    };
  }

  // train
  classifier_config tr_cfg;
  std::string tr_manifest, tr_out;
  {
    auto& c = commands.emplace_back(app.add_subcommand("train", "Train the boundary classifier"));
    c.app->add_option("--manifest", tr_manifest, "Labelled manifest.csv")->required();
    c.app->add_option("--out", tr_out, "Output model (CEBM)")->required();
    c.app->add_option("--input-side", tr_cfg.input_side, "Network input side")->capture_default_str();
    c.app->add_option("--hidden", tr_cfg.hidden, "Hidden units")->capture_default_str();
    c.app->add_option("--learning-rate", tr_cfg.learning_rate, "SGD step")->capture_default_str();
    c.app->add_option("--momentum", tr_cfg.momentum, "SGD momentum")->capture_default_str();
    c.app->add_option("--batch", tr_cfg.batch, "Mini-batch size")->capture_default_str();
    c.app->add_option("--epochs", tr_cfg.epochs, "Passes over the data")->capture_default_str();
    c.app->add_option("--gamma", tr_cfg.gamma, "Focal loss focusing exponent")->capture_default_str();
    c.app->add_option("--alpha", tr_cfg.alpha, "Focal loss class weight")->capture_default_str();
    c.app->add_option("--seed", tr_cfg.seed, "Initialisation and shuffling seed")->capture_default_str();
    add_config(c);
    c.run = [&] {
      const auto model = train(read_signature_set(tr_manifest), tr_cfg);
      save_model(model, tr_out);
      std::cerr << "final loss " << model.loss_curve.back() << "\n";
    };
  }

  // score
  std::string sc_manifest, sc_model, sc_out;
  {
    auto& c = commands.emplace_back(app.add_subcommand("score", "Score signatures with a trained model"));
    c.app->add_option("--manifest", sc_manifest, "manifest.csv")->required();
    c.app->add_option("--model", sc_model, "Trained CEBM model")->required();
    c.app->add_option("--out", sc_out, "Output signature_id,score CSV")->required();
    add_config(c);
    c.run = [&] {
      const auto records = read_signature_set(sc_manifest);
      const model_scorer scorer(load_model(sc_model));
      std::vector<double> scores;
      for (const auto& r : records) scores.push_back(scorer.score(r));
      write_scores(sc_out, records, scores);
    };
  }

  // evaluate
  std::vector<std::string> ev_pred, ev_truth;
  std::string ev_out;
  bool ev_optimal = false;
  {
    auto& c = commands.emplace_back(app.add_subcommand("evaluate", "Compare label maps with ground truth"));
    c.app->add_option("--pred", ev_pred, "Predicted label maps (files or directories)")->required();
    c.app->add_option("--truth", ev_truth, "Ground-truth label maps, paired in order")->required();
    c.app->add_option("--out", ev_out, "Metrics CSV (default: standard output)");
    c.app->add_flag("--optimal", ev_optimal, "Maximum matching for F1/AP instead of greedy");
    add_config(c);
    c.run = [&] {
      const auto preds = expand_inputs(ev_pred);
      const auto truths = expand_inputs(ev_truth);
      if (preds.size() != truths.size())
        throw precondition_error(std::to_string(preds.size()) + " predictions but " + std::to_string(truths.size()) +
                                 " ground-truth maps");
      std::vector<label_map> p, g;
      for (const auto& f : preds) p.push_back(read_labelmap(f));
      for (const auto& f : truths) g.push_back(read_labelmap(f));
      const auto report = evaluate_sequence(p, g, ev_optimal ? f1_matching::optimal : f1_matching::greedy);
      if (ev_out.empty()) {
        write_metrics_csv(std::cout, report);
      } else {
        std::ofstream os(ev_out, std::ios::trunc);
        if (!os) throw io_error("cannot open '" + ev_out + "' for writing");
        write_metrics_csv(os, report);
        std::cout << format_metrics_table(report);
      }
    };
  }

  // synth
  synth_spec sy;
  std::string sy_out;
  bool sy_pgm = false;
  {
    auto& c = commands.emplace_back(app.add_subcommand("synth", "Generate a synthetic corpus with ground truth"));
    c.app->add_option("--out-dir", sy_out, "Writes probmaps/ and truth/ here")->required();
    c.app->add_option("--width", sy.width)->capture_default_str();
    c.app->add_option("--height", sy.height)->capture_default_str();
    c.app->add_option("--cells", sy.cells)->capture_default_str();
    c.app->add_option("--radius-min", sy.radius_min)->capture_default_str();
    c.app->add_option("--radius-max", sy.radius_max)->capture_default_str();
    c.app->add_option("--blur-sigma", sy.blur_sigma)->capture_default_str();
    c.app->add_option("--noise", sy.noise, "Gaussian noise sigma")->capture_default_str();
    c.app->add_option("--seed", sy.seed)->capture_default_str();
    c.app->add_option("--frames", sy.frames, "Frames (more than one makes a video)")->capture_default_str();
    c.app->add_option("--drift", sy.drift, "Per-frame centre displacement")->capture_default_str();
    c.app->add_option("--cluster-fraction", sy.cluster_fraction, "Share of cells placed against another")
        ->capture_default_str();
    c.app->add_option("--peak", sy.peak, "Probability at cell centres")->capture_default_str();
    c.app->add_option("--rim", sy.rim, "Probability at cell edges")->capture_default_str();
    c.app->add_option("--background", sy.background)->capture_default_str();
    c.app->add_option("--max-attempts", sy.max_attempts, "Placement tries per cell")->capture_default_str();
    c.app->add_flag("--pgm", sy_pgm, "Write probability maps as 16-bit PGM instead of CEBP");
    add_config(c);
    c.run = [&] {
      sy.validate();
      const auto frames = synth_video(sy);
      make_dir(fs::path(sy_out) / "probmaps");
      make_dir(fs::path(sy_out) / "truth");
      for (std::size_t w = 0; w < frames.size(); ++w) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "frame_%03zu", w);
        const auto prob = fs::path(sy_out) / "probmaps" / (std::string(stem) + (sy_pgm ? ".pgm" : ".cebp"));
        if (sy_pgm)
          write_probmap_pgm(frames[w].probabilities, prob);
        else
          write_probmap(frames[w].probabilities, prob);
        write_labelmap(frames[w].truth, fs::path(sy_out) / "truth" / (std::string(stem) + ".pgm"));
      }
    };
  }

  // debug dumps
  pipeline_flags sd_p;
  std::string sd_in, sd_dump;
  {
    auto& c = commands.emplace_back(app.add_subcommand("seeds", "Debug: write the seed label map"));
    c.app->add_option("--probmap", sd_in, "Input probability map")->required();
    c.app->add_option("--dump", sd_dump, "Output label map")->required();
    sd_p.add(*c.app, false);
    add_config(c);
    c.run = [&] {
      auto cfg = sd_p.resolve();
      cfg.mode = pipeline_mode::ceb_wo_cls;
      const auto p = read_probmap(sd_in);
      write_labelmap(seeds_to_labelmap(p.shape(), analyze_frame(p, cfg).seeds), sd_dump);
    };
  }
  pipeline_flags ws_p;
  std::string ws_in, ws_dump;
  {
    auto& c = commands.emplace_back(app.add_subcommand("watershed", "Debug: write regions, with watershed lines as 65535"));
    c.app->add_option("--probmap", ws_in, "Input probability map")->required();
    c.app->add_option("--dump", ws_dump, "Output label map")->required();
    ws_p.add(*c.app, false);
    add_config(c);
    c.run = [&] {
      auto cfg = ws_p.resolve();
      cfg.mode = pipeline_mode::ceb_wo_cls;
      write_labelmap(flood_to_labelmap(analyze_frame(read_probmap(ws_in), cfg).flooded), ws_dump);
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (auto& c : commands) {
    if (!c.app->parsed()) continue;
    try {
      apply_config(*c.app, c.config);
      c.run();
    } catch (const usage_error& e) {
      std::cerr << "ceb " << c.app->get_name() << ": " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "ceb " << c.app->get_name() << ": error: " << e.what() << "\n";
      return 1;
    }
  }
  return 0;
}
