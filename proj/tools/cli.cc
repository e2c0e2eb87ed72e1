#include "cli.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cli_config.h"
#include "topicmatch/checkpoint.h"
#include "topicmatch/cost_model.h"
#include "topicmatch/errors.h"
#include "topicmatch/evaluator.h"
#include "topicmatch/io.h"
#include "topicmatch/mac_counter.h"
#include "topicmatch/synth_data.h"
#include "topicmatch/trainer.h"

namespace topicmatch::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
    case ErrorCode::kConfigHashMismatch:
    case ErrorCode::kEmptyDataset:
    case ErrorCode::kNoGroundTruth:
    case ErrorCode::kPopulationMismatch:
      return kExitConfig;
    case ErrorCode::kMissingFile:
    case ErrorCode::kChecksumMismatch:
    case ErrorCode::kNoImages:
    case ErrorCode::kUnreadableImage:
    case ErrorCode::kIOError:
    case ErrorCode::kVersionMismatch:
      return kExitIO;
    case ErrorCode::kNonFinite:
    case ErrorCode::kDegenerateWarp:
    case ErrorCode::kDegeneratePose:
    case ErrorCode::kUndefinedDistance:
      return kExitNumerical;
    default:
      return kExitOther;
  }
}

// Output names given to --out-matches / --viz resolve inside --out.
fs::path inside(const fs::path& out_dir, const std::string& name) {
  const fs::path rel(name);
  require(!rel.empty() && rel.is_relative(), ErrorCode::kConfigError,
          "output name '" + name + "' must be a relative path inside --out");
  for (const auto& part : rel) {
    require(part != "..", ErrorCode::kConfigError, "output name '" + name + "' leaves --out");
  }
  return out_dir / rel;
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorCode::kIOError, "cannot create output directory " + dir.string());
}

DatasetManifest load_data(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "manifest.json";
  return load_manifest(p);
}

std::pair<int, int> parse_dims(const std::string& text) {
  int w = 0, h = 0;
  char sep = 0;
  std::istringstream in(text);
  in >> w >> sep >> h;
  require(!in.fail() && (sep == 'x' || sep == 'X') && in.peek() == EOF && w > 0 && h > 0,
          ErrorCode::kConfigError, "--dims expects WIDTHxHEIGHT, got '" + text + "'");
  return {w, h};
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      require(used == item.size(), ErrorCode::kConfigError, "bad integer '" + item + "'");
    } catch (const std::logic_error&) {
      fail(ErrorCode::kConfigError, "bad integer '" + item + "'");
    }
  }
  require(!out.empty(), ErrorCode::kConfigError, "empty integer list");
  return out;
}

void draw_line(RgbImage& img, Vec2 p, Vec2 q, const std::array<std::uint8_t, 3>& color) {
  const double len = (q - p).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(len)));
  for (int s = 0; s <= steps; ++s) {
    const Vec2 r = p + (q - p) * (static_cast<double>(s) / steps);
    const int x = static_cast<int>(std::lround(r.x())), y = static_cast<int>(std::lround(r.y()));
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
    std::copy(color.begin(), color.end(), img.at(x, y));
  }
}

// Orange at zero confidence, green at one.
std::array<std::uint8_t, 3> confidence_color(double c) {
  c = std::clamp(c, 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - c))),
          static_cast<std::uint8_t>(std::lround(140.0 + 60.0 * c)), 0};
}

RgbImage side_by_side(const ag::Matrix& a, const ag::Matrix& b) {
  RgbImage img(static_cast<int>(a.cols() + b.cols()), static_cast<int>(std::max(a.rows(), b.rows())));
  auto paste = [&img](const ag::Matrix& g, int x0) {
    for (ag::Index y = 0; y < g.rows(); ++y) {
      for (ag::Index x = 0; x < g.cols(); ++x) {
        const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(g(y, x), 0.0, 1.0) * 255.0));
        std::uint8_t* px = img.at(x0 + static_cast<int>(x), static_cast<int>(y));
        px[0] = px[1] = px[2] = v;
      }
    }
  };
  paste(a, 0);
  paste(b, static_cast<int>(a.cols()));
  return img;
}

struct Runner {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;

  void note(const std::string& line) const {
    if (!quiet) out << line << "\n";
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Topic-assisted detector-free image matching", "topicmatch"};
  app.require_subcommand(1);
  Runner runner{out, err};
  app.add_flag("-q,--quiet", runner.quiet, "Only print errors");

  Settings settings;
  std::string config_path;
  std::function<void()> action;

  auto add_config = [&config_path](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (defaults < file < flags)")
        ->check(CLI::ExistingFile);
  };
  auto load_settings = [&]() {
    if (!config_path.empty()) apply_config_file(config_path, settings);
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic pair dataset");
  int gen_n = 0;
  std::string gen_out, gen_dims;
  std::uint64_t gen_seed = 0;
  double gen_pose = 0.0, gen_tilt = 0.0;
  gen->add_option("--n", gen_n, "Number of pairs")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Dataset seed");
  auto* gen_dims_opt = gen->add_option("--dims", gen_dims, "Image size WIDTHxHEIGHT");
  auto* gen_pose_opt = gen->add_option("--pose-range", gen_pose, "Maximum relative rotation in degrees");
  auto* gen_tilt_opt = gen->add_option("--tilt-range", gen_tilt, "Maximum plane tilt in degrees");
  add_config(gen);
  gen->callback([&]() {
    action = [&]() {
      load_settings();
      if (gen_dims_opt->count() > 0) std::tie(settings.scene.width, settings.scene.height) = parse_dims(gen_dims);
      if (gen_pose_opt->count() > 0) settings.scene.max_rotation_deg = gen_pose;
      if (gen_tilt_opt->count() > 0) settings.scene.max_tilt_deg = gen_tilt;
      require(gen_n > 0, ErrorCode::kConfigError, "n must be positive");
      settings.scene.validate();
      make_out_dir(gen_out);
      const DatasetManifest m = build_dataset(gen_n, gen_out, settings.scene, gen_seed);
      runner.note("wrote " + std::to_string(m.pairs.size()) + " pairs to " +
                  (fs::path(gen_out) / "manifest.json").string());
    };
  });

  // train
  auto* tr = app.add_subcommand("train", "Train a matcher on a synthetic dataset");
  std::string tr_data, tr_out, tr_variant;
  double tr_lr = 0.0;
  int tr_epochs = 0, tr_topics = 0, tr_batch = 0;
  std::uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "Dataset directory or manifest.json")->required();
  tr->add_option("--out", tr_out, "Output directory")->required();
  auto* tr_variant_opt = tr->add_option("--variant", tr_variant, "fast or plus")
                             ->check(CLI::IsMember({"fast", "plus"}));
  auto* tr_lr_opt = tr->add_option("--lr", tr_lr, "Initial learning rate");
  auto* tr_epochs_opt = tr->add_option("--epochs", tr_epochs, "Epochs");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "Training and initialization seed");
  auto* tr_topics_opt = tr->add_option("--num-topics", tr_topics, "Number of latent topics K");
  auto* tr_batch_opt = tr->add_option("--batch-size", tr_batch, "Pairs per optimizer update");
  add_config(tr);
  tr->callback([&]() {
    action = [&]() {
      load_settings();
      TrainConfig& t = settings.train;
      if (tr_variant_opt->count() > 0) t.model.matcher.variant = parse_variant(tr_variant);
      if (tr_lr_opt->count() > 0) t.lr = tr_lr;
      if (tr_epochs_opt->count() > 0) t.epochs = tr_epochs;
      if (tr_seed_opt->count() > 0) t.seed = t.model.seed = tr_seed;
      if (tr_topics_opt->count() > 0) t.model.matcher.num_topics = tr_topics;
      if (tr_batch_opt->count() > 0) t.batch_size = tr_batch;
      t.eval = settings.eval;
      t.validate();
      const DatasetManifest m = load_data(tr_data);
      make_out_dir(tr_out);
      write_file(fs::path(tr_out) / "config.json", [&] {
        const std::string s = settings_to_json(settings);
        return std::vector<std::uint8_t>(s.begin(), s.end());
      }());
      const TrainReport rep = train(m, t, tr_out);
      const EpochRecord& last = rep.epochs.back();
      std::ostringstream msg;
      msg << "variant " << variant_name(t.model.matcher.variant) << ", " << rep.epochs.size()
          << " epochs, final loss " << last.total << ", checkpoint " << rep.checkpoint.string();
      runner.note(msg.str());
    };
  });

  // match
  auto* mt = app.add_subcommand("match", "Match two images with a trained checkpoint");
  std::string mt_a, mt_b, mt_ckpt, mt_out, mt_csv = "matches.csv", mt_viz;
  double mt_tau = 0.0;
  mt->add_option("image_a", mt_a, "First image (PGM, PPM or PNG)")->required();
  mt->add_option("image_b", mt_b, "Second image")->required();
  mt->add_option("--checkpoint", mt_ckpt, "Checkpoint file")->required();
  mt->add_option("--out", mt_out, "Output directory")->required();
  auto* mt_tau_opt = mt->add_option("--tau", mt_tau, "Coarse confidence threshold in (0, 1]");
  mt->add_option("--out-matches", mt_csv, "CSV name inside --out")->capture_default_str();
  mt->add_option("--viz", mt_viz, "Side-by-side PPM name inside --out");
  mt->callback([&]() {
    action = [&]() {
      Model model = load_model(mt_ckpt);
      if (mt_tau_opt->count() > 0) {
        model.config.matcher.tau = mt_tau;
        model.config.matcher.validate();
      }
      const fs::path csv_path = inside(mt_out, mt_csv);
      std::optional<fs::path> viz_path;
      if (!mt_viz.empty()) viz_path = inside(mt_out, mt_viz);
      const PaddedImage a = load_padded_image(mt_a);
      const PaddedImage b = load_padded_image(mt_b);
      const MatchOutput res = run_matching(model, a.image, b.image);

      make_out_dir(mt_out);
      std::ofstream csv(csv_path);
      require(csv.good(), ErrorCode::kIOError, "cannot write " + csv_path.string());
      csv << "xa,ya,xb,yb,conf\n";
      std::vector<std::pair<FineMatch, double>> kept;
      for (const FineMatch& f : res.fine.matches) {
        if (f.xa.x() > a.original_width - 1 || f.xa.y() > a.original_height - 1 ||
            f.xb.x() > b.original_width - 1 || f.xb.y() > b.original_height - 1) {
          continue;
        }
        const double conf = res.coarse.matches[static_cast<std::size_t>(f.coarse_index)].confidence;
        kept.emplace_back(f, conf);
        char line[160];
        std::snprintf(line, sizeof(line), "%.3f,%.3f,%.3f,%.3f,%.3f\n", f.xa.x(), f.xa.y(), f.xb.x(),
                      f.xb.y(), conf);
        csv << line;
      }
      csv.close();
      require(csv.good(), ErrorCode::kIOError, "cannot write " + csv_path.string());
      if (viz_path) {
        const ag::Matrix ga = a.image.pixels.topLeftCorner(a.original_height, a.original_width);
        const ag::Matrix gb = b.image.pixels.topLeftCorner(b.original_height, b.original_width);
        RgbImage img = side_by_side(ga, gb);
        const Vec2 shift(static_cast<double>(a.original_width), 0.0);
        // low confidence first so confident lines end on top
        std::sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) { return x.second < y.second; });
        for (const auto& [f, conf] : kept) draw_line(img, f.xa, f.xb + shift, confidence_color(conf));
        write_ppm(*viz_path, img);
      }
      runner.note(std::to_string(kept.size()) + " matches written to " + csv_path.string());
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Homography AUC, precision and epipolar statistics");
  std::string ev_data, ev_ckpt, ev_out, ev_split = "val";
  bool ev_oracle = false;
  double ev_thr = 0.0;
  std::uint64_t ev_seed = 0;
  ev->add_option("--data", ev_data, "Dataset directory or manifest.json")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file (not needed with --oracle)");
  ev->add_option("--out", ev_out, "Output directory")->required();
  ev->add_option("--split", ev_split, "Dataset split")->capture_default_str();
  ev->add_flag("--oracle", ev_oracle, "Use exact ground-truth correspondences");
  auto* ev_thr_opt = ev->add_option("--ransac-threshold", ev_thr, "RANSAC inlier threshold in pixels");
  auto* ev_seed_opt = ev->add_option("--ransac-seed", ev_seed, "RANSAC seed");
  add_config(ev);
  ev->callback([&]() {
    action = [&]() {
      load_settings();
      EvalConfig cfg = settings.eval;
      cfg.oracle = ev_oracle;
      if (ev_thr_opt->count() > 0) cfg.ransac_threshold = ev_thr;
      if (ev_seed_opt->count() > 0) cfg.ransac_seed = ev_seed;
      require(ev_oracle || !ev_ckpt.empty(), ErrorCode::kConfigError, "--checkpoint is required without --oracle");
      std::optional<Model> model;
      if (!ev_oracle) model = load_model(ev_ckpt);
      const DatasetManifest m = load_data(ev_data);
      const EvalReport rep = evaluate(model ? &*model : nullptr, m, ev_split, cfg);
      make_out_dir(ev_out);
      const std::string text = rep.to_json();
      write_file(fs::path(ev_out) / "eval_report.json", std::vector<std::uint8_t>(text.begin(), text.end()));
      std::ostringstream msg;
      msg << rep.pairs.size() << " pairs, failures " << rep.failures;
      for (std::size_t t = 0; t < rep.auc.size(); ++t) msg << ", AUC@" << rep.auc_thresholds[t] << "px " << rep.auc[t];
      runner.note(msg.str());
    };
  });

  // profile
  auto* pr = app.add_subcommand("profile", "Analytic multiply-accumulate counts per stage");
  std::string pr_out, pr_ckpt, pr_variant = "both", pr_pops = "uniform";
  int pr_h = 256, pr_w = 256, pr_topics = 0, pr_kc = 0, pr_matches = 0;
  bool pr_instr = false;
  pr->add_option("--out", pr_out, "Output directory")->required();
  pr->add_option("--checkpoint", pr_ckpt, "Take the architecture from a checkpoint");
  pr->add_option("--height", pr_h, "Image height in pixels")->capture_default_str();
  pr->add_option("--width", pr_w, "Image width in pixels")->capture_default_str();
  auto* pr_topics_opt = pr->add_option("--num-topics", pr_topics, "Number of topics K");
  auto* pr_kc_opt = pr->add_option("--k-covis", pr_kc, "Covisible topics of the plus variant");
  pr->add_option("--matches", pr_matches, "Refined match count")->capture_default_str();
  pr->add_option("--variant", pr_variant, "fast, plus or both")
      ->check(CLI::IsMember({"fast", "plus", "both"}))
      ->capture_default_str();
  pr->add_option("--populations", pr_pops, "uniform or dominant (every feature in topic 0)")
      ->check(CLI::IsMember({"uniform", "dominant"}))
      ->capture_default_str();
  pr->add_flag("--instrumented", pr_instr,
               "Also run a randomly initialized model and record the counted MACs");
  add_config(pr);
  pr->callback([&]() {
    action = [&]() {
      load_settings();
      ModelConfig mc = settings.train.model;
      if (!pr_ckpt.empty()) mc = read_checkpoint(pr_ckpt).config;
      if (pr_topics_opt->count() > 0) mc.matcher.num_topics = pr_topics;
      if (pr_kc_opt->count() > 0) mc.matcher.k_covis = pr_kc;
      require(pr_h > 0 && pr_w > 0 && pr_h % 8 == 0 && pr_w % 8 == 0, ErrorCode::kConfigError,
              "--height and --width must be positive multiples of 8");
      require(pr_matches >= 0, ErrorCode::kConfigError, "--matches must be nonnegative");
      std::vector<Variant> variants;
      if (pr_variant != "plus") variants.push_back(Variant::kFast);
      if (pr_variant != "fast") variants.push_back(Variant::kPlus);

      const int n = (pr_h / 8) * (pr_w / 8);
      const int k = mc.matcher.num_topics;
      std::vector<int> pops(static_cast<std::size_t>(k), 0);
      if (pr_pops == "dominant") {
        pops[0] = n;
      } else {
        for (int t = 0; t < k; ++t) pops[static_cast<std::size_t>(t)] = n / k + (t < n % k ? 1 : 0);
      }

      make_out_dir(pr_out);
      const fs::path csv_path = fs::path(pr_out) / "profile.csv";
      std::ofstream csv(csv_path);
      require(csv.good(), ErrorCode::kIOError, "cannot write " + csv_path.string());
      csv << "variant,stage,macs" << (pr_instr ? ",instrumented_macs" : "") << "\n";
      for (Variant v : variants) {
        ModelConfig vc = mc;
        vc.matcher.variant = v;
        vc.validate();
        CostInputs in;
        std::map<std::string, std::uint64_t> measured;
        if (pr_instr) {
          const Model model = init_model(vc);
          Rng rng(vc.seed + 17);
          ImageTensor img_a{ag::Matrix(pr_h, pr_w)}, img_b{ag::Matrix(pr_h, pr_w)};
          for (ag::Index i = 0; i < img_a.pixels.size(); ++i) {
            img_a.pixels.data()[i] = rng.uniform();
            img_b.pixels.data()[i] = rng.uniform();
          }
          MacCounter counter;
          MatchOutput res;
          {
            ScopedMacCounter guard(counter);
            res = run_matching(model, img_a, img_b);
          }
          in = cost_inputs_for(model, res, pr_h, pr_w);
          measured = counter.by_stage();
        } else {
          in.height = pr_h;
          in.width = pr_w;
          in.widths = vc.widths;
          in.num_topics = k;
          in.variant = v;
          in.k_covis = vc.matcher.k_covis;
          if (v == Variant::kPlus) in.populations_a = in.populations_b = pops;
          in.window = vc.fine.window;
          in.token_hidden = vc.fine.token_hidden;
          in.channel_hidden = vc.fine.channel_hidden;
          in.matches = pr_matches;
        }
        const CostModel cost = count_ops(in);
        std::uint64_t measured_total = 0;
        for (const auto& [stage, macs] : cost.stages) {
          csv << variant_name(v) << "," << stage << "," << macs;
          if (pr_instr) {
            const auto it = measured.find(stage);
            const std::uint64_t m = it == measured.end() ? 0 : it->second;
            measured_total += m;
            csv << "," << m;
          }
          csv << "\n";
        }
        csv << variant_name(v) << ",total," << cost.total();
        if (pr_instr) csv << "," << measured_total;
        csv << "\n";
        std::ostringstream msg;
        msg << variant_name(v) << ": total " << cost.total() << " MACs, coarse " << cost.coarse_total();
        runner.note(msg.str());
      }
      csv.close();
      require(csv.good(), ErrorCode::kIOError, "cannot write " + csv_path.string());
    };
  });

  // viz-topics
  auto* vz = app.add_subcommand("viz-topics", "Render per-cell topic labels of a pair");
  std::string vz_ckpt, vz_data, vz_pair, vz_out;
  std::uint64_t vz_palette = 0;
  vz->add_option("--checkpoint", vz_ckpt, "Checkpoint file")->required();
  vz->add_option("--data", vz_data, "Dataset directory or manifest.json")->required();
  vz->add_option("--pair", vz_pair, "Pair id (default: first val pair)");
  vz->add_option("--out", vz_out, "Output directory")->required();
  vz->add_option("--palette-seed", vz_palette, "Palette seed")->capture_default_str();
  vz->callback([&]() {
    action = [&]() {
      const Model model = load_model(vz_ckpt);
      const DatasetManifest m = load_data(vz_data);
      std::string id = vz_pair;
      if (id.empty()) {
        auto val = m.split("val");
        if (val.empty()) val = m.split("train");
        require(!val.empty(), ErrorCode::kEmptyDataset, "dataset has no pairs");
        id = val.front()->id;
      }
      const ScenePair pair = load_pair(m, id);
      const MatchOutput res = run_matching(model, pair.image_a, pair.image_b);
      make_out_dir(vz_out);
      const std::pair<const FeaturePyramid*, const TopicDistribution*> sides[2] = {
          {&res.pyramid_a, &res.coarse.dist_a}, {&res.pyramid_b, &res.coarse.dist_b}};
      const ImageTensor* images[2] = {&pair.image_a, &pair.image_b};
      const char* tags[2] = {"a", "b"};
      TopicOverlay last;
      for (int s = 0; s < 2; ++s) {
        const auto& [pyr, dist] = sides[s];
        last = render_topic_overlay(dist->theta.value(), pyr->coarse_width, pyr->coarse_height,
                                    images[s]->pixels, vz_palette);
        write_ppm(fs::path(vz_out) / (std::string("topics_") + tags[s] + ".ppm"), last.overlay);
        write_pgm_bytes(fs::path(vz_out) / (std::string("topic_index_") + tags[s] + ".pgm"), last.width,
                        last.height, last.index_map);
      }
      write_palette_json(fs::path(vz_out) / "palette.json", last.palette, vz_palette);
      runner.note("topic overlays for " + id + " written to " + vz_out);
    };
  });

  // covis-sweep
  auto* sw = app.add_subcommand("covis-sweep", "Re-evaluate a plus model over k_covis values");
  std::string sw_ckpt, sw_data, sw_out, sw_split = "val", sw_k = "2,4,8";
  sw->add_option("--checkpoint", sw_ckpt, "Plus-variant checkpoint")->required();
  sw->add_option("--data", sw_data, "Dataset directory or manifest.json")->required();
  sw->add_option("--out", sw_out, "Output directory")->required();
  sw->add_option("--split", sw_split, "Dataset split")->capture_default_str();
  sw->add_option("--k", sw_k, "Comma-separated k_covis values")->capture_default_str();
  add_config(sw);
  sw->callback([&]() {
    action = [&]() {
      load_settings();
      const std::vector<int> ks = parse_int_list(sw_k);
      const Model model = load_model(sw_ckpt);
      const DatasetManifest m = load_data(sw_data);
      std::vector<ScenePair> pairs;
      for (const PairRecord* r : m.split(sw_split)) pairs.push_back(load_pair(m, r->id));
      require(!pairs.empty(), ErrorCode::kEmptyDataset, "split '" + sw_split + "' has no pairs");
      const auto rows = covis_sweep(model, pairs, ks, settings.eval);
      make_out_dir(sw_out);
      write_sweep_csv(fs::path(sw_out) / "covis_sweep.csv", rows, settings.eval.auc_thresholds);
      runner.note(std::to_string(rows.size()) + " sweep rows written to " +
                  (fs::path(sw_out) / "covis_sweep.csv").string());
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (action) action();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOk;
}

}  // namespace topicmatch::cli
