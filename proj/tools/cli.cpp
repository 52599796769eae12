/*
 * Copyright 2026 The neat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "neat/checkpoint.hpp"
#include "neat/evalkit.hpp"
#include "neat/image.hpp"
#include "neat/imgproc.hpp"
#include "neat/infer.hpp"
#include "neat/nets.hpp"
#include "neat/train.hpp"

namespace neat::cli {

namespace fs = std::filesystem;

namespace {

/// Input that is missing or unreadable.
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Semantically invalid flag values or combinations.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInput("missing file: " + p.string());
}

void require_dir(const fs::path& p) {
  if (!fs::is_directory(p)) throw MissingInput("missing directory: " + p.string());
}

struct PriorFlags {
  bool no_blur = false;
  int blur_kernel = 7;
  int bilateral_d = 25;
  double bilateral_sigma = 100.0;
  double prior_weight = 0.5;

  imgproc::PriorConfig config() const {
    imgproc::PriorConfig cfg;
    cfg.blur_enabled = !no_blur;
    cfg.blur_kernel = blur_kernel;
    cfg.bilateral_diameter = bilateral_d;
    cfg.bilateral_sigma = bilateral_sigma;
    cfg.prior_weight = prior_weight;
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

void add_prior_flags(CLI::App* app, PriorFlags& f) {
  auto* no_blur = app->add_flag("--no-prior-blur", f.no_blur, "Skip the Gaussian blur stage of the content prior");
  app->add_option("--blur-kernel", f.blur_kernel, "Gaussian blur kernel size (odd, pixels)")->excludes(no_blur);
  app->add_option("--bilateral-d", f.bilateral_d, "Bilateral filter diameter (odd, pixels)");
  app->add_option("--bilateral-sigma", f.bilateral_sigma, "Bilateral range and spatial sigma (0-255 range units)");
  app->add_option("--prior-weight", f.prior_weight, "Scale applied to the recolored prior");
}

struct StylizeFlags {
  fs::path content, style, checkpoint, out;
  double alpha = 1.0;
  int size = 0;
  PriorFlags prior;

  infer::StylizeOptions options() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw UsageError("--alpha must be finite and >= 0");
    if (size < 0 || (size > 0 && size < 16)) throw UsageError("--size must be 0 (native) or at least 16");
    infer::StylizeOptions o;
    o.alpha = alpha;
    o.output_size = size;
    o.prior = prior.config();
    return o;
  }
};

void add_size_flag(CLI::App* app, int& size) {
  app->add_option("--size", size, "Longer output side in pixels, rounded down to a multiple of 8 (0 = native)");
}

nets::ModelParams load_params(const fs::path& p) {
  require_file(p);
  return nets::load_checkpoint(p, true);
}

Image load_input(const fs::path& p) {
  require_file(p);
  return load_image(p);
}

std::vector<double> parse_alpha_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      const double a = std::stod(item, &used);
      if (used != item.size() || !(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument(item);
      out.push_back(a);
    } catch (const std::exception&) {
      throw UsageError("invalid alpha '" + item + "' in --alpha-list");
    }
  }
  if (out.empty()) throw UsageError("--alpha-list is empty");
  return out;
}

std::string alpha_name(double a) {
  std::ostringstream os;
  os << "alpha_" << std::fixed << std::setprecision(2) << a << ".png";
  return os.str();
}

}  // namespace

std::vector<std::string> subcommands() { return {"train", "stylize", "interp", "prior", "eval", "bench", "frames", "init"}; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Image-editing style transfer: content priors, RGB deltas, training and evaluation", "neat"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "neat 0.1.0");

  // train
  fs::path train_config, train_resume;
  int log_every = 10;
  auto* train = app.add_subcommand("train", "Train from a key=value config file");
  train->add_option("--config", train_config, "Training config file")->required();
  train->add_option("--resume", train_resume, "Checkpoint to resume from (overrides the config's resume key)");
  train->add_option("--log-every", log_every, "Print a loss line every N steps (0 = silent)");

  // stylize
  StylizeFlags sty;
  auto* stylize = app.add_subcommand("stylize", "Stylize one content image with one style image");
  stylize->add_option("--content", sty.content, "Content image")->required();
  stylize->add_option("--style", sty.style, "Style image")->required();
  stylize->add_option("--checkpoint", sty.checkpoint, "Model checkpoint")->required();
  stylize->add_option("--out", sty.out, "Output image path")->required();
  stylize->add_option("--alpha", sty.alpha, "Stylization strength; values above 1 amplify");
  add_prior_flags(stylize, sty.prior);
  add_size_flag(stylize, sty.size);

  // interp
  StylizeFlags itp;
  std::string alpha_list = "0,0.25,0.5,0.75,1,1.25,1.5";
  auto* interp = app.add_subcommand("interp", "Write one output per strength between reconstruction and stylization");
  interp->add_option("--content", itp.content, "Content image")->required();
  interp->add_option("--style", itp.style, "Style image")->required();
  interp->add_option("--checkpoint", itp.checkpoint, "Model checkpoint")->required();
  interp->add_option("--out", itp.out, "Output directory (one alpha_<a>.png per strength)")->required();
  interp->add_option("--alpha-list", alpha_list, "Comma-separated strengths");
  add_prior_flags(interp, itp.prior);
  add_size_flag(interp, itp.size);

  // prior
  fs::path prior_content, prior_style, prior_out;
  PriorFlags prior_flags;
  auto* prior = app.add_subcommand("prior", "Write the intermediate content-prior stages as images");
  prior->add_option("--content", prior_content, "Content image")->required();
  prior->add_option("--style", prior_style, "Style image (recolor target)")->required();
  prior->add_option("--out", prior_out, "Output directory")->required();
  add_prior_flags(prior, prior_flags);

  // eval
  fs::path eval_pairs, eval_ckpt, eval_out;
  int64_t chamfer_sample = 4096;
  int eval_size = 0;
  uint64_t eval_seed = 0;
  PriorFlags eval_prior;
  auto* eval = app.add_subcommand("eval", "Stylize listed pairs and report chamfer, sifid and content_proxy");
  eval->add_option("--pairs", eval_pairs, "CSV with header and content_path,style_path rows")->required();
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval->add_option("--out", eval_out, "Metrics CSV path")->required();
  eval->add_option("--chamfer-sample", chamfer_sample, "Pixels sampled per image for chamfer (0 = all)");
  eval->add_option("--seed", eval_seed, "Sampling seed");
  add_prior_flags(eval, eval_prior);
  add_size_flag(eval, eval_size);

  // bench
  fs::path bench_ckpt, bench_out;
  std::string bench_sizes = "256,512,1920x1080";
  int bench_runs = 10, bench_warmup = 2;
  auto* bench = app.add_subcommand("bench", "Time end-to-end stylization per resolution");
  bench->add_option("--checkpoint", bench_ckpt, "Model checkpoint")->required();
  bench->add_option("--sizes", bench_sizes, "Comma-separated resolutions: N or WxH");
  bench->add_option("--runs", bench_runs, "Timed runs per resolution");
  bench->add_option("--warmup", bench_warmup, "Untimed warmup runs per resolution");
  bench->add_option("--out", bench_out, "Optional CSV path");

  // frames
  StylizeFlags frm;
  int jobs = 1;
  auto* frames = app.add_subcommand("frames", "Stylize every frame in a directory");
  frames->add_option("--in", frm.content, "Directory of numbered frames")->required();
  frames->add_option("--style", frm.style, "Style image")->required();
  frames->add_option("--checkpoint", frm.checkpoint, "Model checkpoint")->required();
  frames->add_option("--out", frm.out, "Output directory")->required();
  frames->add_option("--alpha", frm.alpha, "Stylization strength; values above 1 amplify");
  frames->add_option("--jobs", jobs, "Frames processed concurrently");
  add_prior_flags(frames, frm.prior);
  add_size_flag(frames, frm.size);

  // init
  fs::path init_out;
  int base_width = 16;
  uint64_t init_seed = 0;
  bool random_head = false;
  auto* init = app.add_subcommand("init", "Write a freshly initialized checkpoint");
  init->add_option("--out", init_out, "Checkpoint path")->required();
  init->add_option("--base-width", base_width, "Encoder base width");
  init->add_option("--seed", init_seed, "Initialization seed");
  init->add_flag("--random-head", random_head, "Randomly initialize the decoder output layer instead of zeroing it");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      require_file(train_config);
      train::TrainConfig cfg = train::load_train_config(train_config);
      if (!train_resume.empty()) cfg.resume = train_resume;
      if (!cfg.resume.empty()) require_file(cfg.resume);
      if (log_every < 0) throw UsageError("--log-every must be >= 0");
      out << train::format_train_config(cfg) << std::flush;
      const auto result = train::fit(cfg, [&](const losses::LossReport& r) {
        if (log_every > 0 && r.step % log_every == 0) {
          out << "step " << r.step << " total " << r.total;
          for (int i = 0; i < losses::kTermCount; ++i) out << ' ' << losses::kTermNames[i] << ' ' << r.terms[i];
          out << '\n' << std::flush;
        }
      });
      out << "checkpoint " << result.final_checkpoint.string() << "\nlosses " << result.loss_csv.string() << '\n';
    } else if (*stylize) {
      const auto opts = sty.options();
      const Image content = load_input(sty.content);
      const Image style = load_input(sty.style);
      const auto params = load_params(sty.checkpoint);
      save_image(infer::stylize(content, style, params, opts), sty.out);
    } else if (*interp) {
      const auto opts = itp.options();
      const auto alphas = parse_alpha_list(alpha_list);
      const Image content = load_input(itp.content);
      const Image style = load_input(itp.style);
      const auto params = load_params(itp.checkpoint);
      fs::create_directories(itp.out);
      for (double a : alphas) save_image(infer::stylize_interp(content, style, params, a, opts), itp.out / alpha_name(a));
    } else if (*prior) {
      const auto cfg = prior_flags.config();
      const Image content = load_input(prior_content);
      const Image style = load_input(prior_style);
      const auto st = imgproc::build_prior_stages(content, style, cfg);
      fs::create_directories(prior_out);
      save_image(content, prior_out / "0_content.png");
      save_image(st.blurred, prior_out / "1_blurred.png");
      save_image(st.filtered, prior_out / "2_filtered.png");
      save_image(st.recolored, prior_out / "3_recolored.png");
      save_image(st.weighted, prior_out / "4_weighted.png");
      save_image(imgproc::build_self_prior(content, cfg), prior_out / "5_self.png");
    } else if (*eval) {
      if (chamfer_sample < 0) throw UsageError("--chamfer-sample must be >= 0");
      StylizeFlags f;
      f.size = eval_size;
      f.prior = eval_prior;
      evalkit::EvalOptions opts;
      opts.stylize = f.options();
      opts.chamfer_sample = chamfer_sample;
      opts.seed = eval_seed;
      require_file(eval_pairs);
      const auto params = load_params(eval_ckpt);
      for (const auto& [c, s] : evalkit::read_pairs_csv(eval_pairs)) {
        require_file(c);
        require_file(s);
      }
      const auto report = evalkit::evaluate_pairs(eval_pairs, params, opts);
      const std::string csv = evalkit::metric_csv(report);
      if (eval_out.has_parent_path()) fs::create_directories(eval_out.parent_path());
      std::ofstream(eval_out) << csv;
      out << csv;
    } else if (*bench) {
      if (bench_runs < 1 || bench_warmup < 0) throw UsageError("--runs must be >= 1 and --warmup >= 0");
      std::vector<evalkit::Resolution> sizes;
      try {
        sizes = evalkit::parse_resolutions(bench_sizes);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const auto params = load_params(bench_ckpt);
      evalkit::BenchOptions opts;
      opts.runs = bench_runs;
      opts.warmup = bench_warmup;
      const auto rows = evalkit::bench(params, sizes, opts);
      out << evalkit::timing_table(rows);
      if (!bench_out.empty()) std::ofstream(bench_out) << evalkit::timing_csv(rows);
    } else if (*frames) {
      if (jobs < 1) throw UsageError("--jobs must be >= 1");
      const auto opts = frm.options();
      require_dir(frm.content);
      const Image style = load_input(frm.style);
      const auto params = load_params(frm.checkpoint);
      const auto report = infer::stylize_frames(frm.content, style, params, opts, frm.out, jobs);
      for (const auto& f : report.frames) {
        if (!f.ok) err << "warning: skipped " << f.input.string() << ": " << f.error << '\n';
      }
      out << "frames " << report.processed() << " written, " << report.skipped() << " skipped\n";
    } else if (*init) {
      if (base_width < 1) throw UsageError("--base-width must be >= 1");
      nets::NetConfig cfg;
      cfg.base_width = base_width;
      cfg.seed = init_seed;
      cfg.zero_init_decoder_head = !random_head;
      nets::save_checkpoint(nets::ModelParams(cfg), init_out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const train::ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const train::DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const ImageIoError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

}  // namespace neat::cli
