#include "deanet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>

#include "deanet/checkpoint.hpp"
#include "deanet/error.hpp"
#include "deanet/log.hpp"
#include "deanet/pipeline.hpp"
#include "deanet/png_io.hpp"

namespace deanet::cli {
namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int verbose = 0;
  bool dump = false;
};

Config effective_config(const Globals& g) {
  Config c = g.config_path.empty() ? Config{} : load_config_file(g.config_path);
  for (const auto& o : g.overrides) apply_override(c, o);
  if (g.seed) c.train.seed = *g.seed;
  c.validate();
  return c;
}

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (e.is_regular_file() && ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no PNG files in " + dir.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

CheckpointEntry image_entry(const std::string& name, const Image& img) {
  return {name,
          {static_cast<std::uint32_t>(img.channels()), static_cast<std::uint32_t>(img.height()),
           static_cast<std::uint32_t>(img.width())},
          std::vector<float>(img.data().begin(), img.data().end())};
}

// --------------------------------------------------------------- commands

struct WlsArgs {
  std::string in, out_base, out_detail, raw;
};

void cmd_wls(const Config& c, const WlsArgs& a) {
  const Image img = read_png(a.in);
  const FrequencySplit s = frequency_split(img, c.wls);
  Image detail = s.high_freq;
  for (double& v : detail.data()) v += 0.5;
  write_png(a.out_base, s.low_freq);
  write_png(a.out_detail, detail);
  const fs::path raw = a.raw.empty() ? fs::path(a.out_base).replace_extension(".dean") : fs::path(a.raw);
  write_checkpoint(raw, std::vector<CheckpointEntry>{image_entry("wls.low", s.low_freq), image_entry("wls.high", s.high_freq)});
  log::info("wrote " + a.out_base + ", " + a.out_detail + " and " + raw.string());
}

struct DecomposeArgs {
  std::string in, ckpt, out_dir;
};

void cmd_decompose(const Config& c, const DecomposeArgs& a) {
  DecomNet<float> decom(c.net);
  const fs::path ckpt = fs::path(a.ckpt) / kDecomCheckpoint;
  if (!fs::exists(ckpt)) throw DataError("decompose: checkpoint not found: " + ckpt.string());
  import_parameters(decom, read_checkpoint(ckpt), ckpt.string());
  decom.set_trainable(false);
  const Image img = read_png(a.in);
  const int d = c.net.divisor();
  const int ph = (img.height() + d - 1) / d * d, pw = (img.width() + d - 1) / d * d;
  const Image source = c.train.decom_source == DecomSource::lf ? frequency_split(img, c.wls).low_freq : img;
  const auto out = decom.forward(image_to_tensor<float>(pad_replicate(source, ph, pw)));
  fs::create_directories(a.out_dir);
  write_png(fs::path(a.out_dir) / "reflectance.png", crop(tensor_to_image(out.reflectance), 0, 0, img.height(), img.width()));
  write_png(fs::path(a.out_dir) / "illumination.png",
            crop(tensor_to_image(out.illumination), 0, 0, img.height(), img.width()));
}

struct TrainArgs {
  std::string stage, data, ckpt;
  bool resume = false;
  int max_steps = 0;
};

void cmd_train(const Config& c, const TrainArgs& a, std::ostream& out) {
  std::string stage = a.stage;
  if (stage.empty()) {
    if (c.train.schedule != Schedule::joint) throw UsageError("train: --stage 1 or --stage 2 is required with train.schedule = staged");
    stage = "joint";
  }
  if ((stage == "joint") != (c.train.schedule == Schedule::joint))
    throw UsageError("train: --stage " + stage + " does not match train.schedule");
  const std::string root = a.data.empty() ? c.data.train_dir : a.data;
  if (root.empty()) throw UsageError("train: no dataset (pass --data or set data.train_dir)");
  const PairedDataset data = PairedDataset::from_root(root);
  const TrainOptions options{a.ckpt, a.resume, a.max_steps};
  const TrainReport r = stage == "1"   ? train_stage1(data, c, options)
                        : stage == "2" ? train_stage2(data, c, options)
                                       : train_joint(data, c, options);
  out << "steps " << r.first_step << ".." << r.first_step + r.steps_run << " of " << r.total_steps << "\n";
  if (!r.totals.empty()) out << "final total " << r.totals.back() << "\n";
  out << "log " << r.log_path.string() << "\n";
}

struct EnhanceArgs {
  std::string in, ckpt, out, dump;
};

void cmd_enhance(const Config& c, const EnhanceArgs& a) {
  const InferenceModels models = load_inference_models(a.ckpt, c);
  const EnhanceResult r = enhance_image(read_png(a.in), models, c);
  write_png(a.out, r.final_image);
  if (!a.dump.empty()) write_intermediates(r, a.dump);
}

struct MetricsArgs {
  std::string a, b, niqe;
  bool csv = false;
};

void cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  const Image x = read_png(a.a), y = read_png(a.b);
  std::optional<NiqeModel> model;
  if (!a.niqe.empty()) model = load_niqe_model(a.niqe);
  const MetricReport r = compute_metrics(x, y, model ? &*model : nullptr);
  out << (a.csv ? format_report_csv(r) : format_report_table(r));
}

struct EvaluateArgs {
  std::string data, ckpt, out, niqe;
};

void cmd_evaluate(const Config& c, const EvaluateArgs& a, std::ostream& out) {
  const std::string root = a.data.empty() ? c.data.eval_dir : a.data;
  if (root.empty()) throw UsageError("evaluate: no dataset (pass --data or set data.eval_dir)");
  const PairedDataset data = PairedDataset::from_root(root);
  const InferenceModels models = load_inference_models(a.ckpt, c);
  std::optional<NiqeModel> model;
  if (!a.niqe.empty()) model = load_niqe_model(a.niqe);
  const EvalReport r = evaluate(
      data, [&](const Image& low, const Image&) { return enhance_image(low, models, c).final_image; },
      model ? &*model : nullptr);
  const fs::path dir = a.out.empty() ? fs::path(a.ckpt) : fs::path(a.out);
  const std::string table = format_eval_table(r);
  write_text(dir / "eval_report.csv", format_eval_csv(r));
  write_text(dir / "eval_report.txt", table);
  out << table;
}

struct NiqeFitArgs {
  std::string in, out;
};

void cmd_niqe_fit(const Config& c, const NiqeFitArgs& a, std::ostream& out) {
  std::vector<Image> corpus;
  for (const auto& f : png_files(a.in)) corpus.push_back(read_png(f));
  save_niqe_model(a.out, niqe_fit(corpus, c.niqe));
  out << "fitted on " << corpus.size() << " images -> " << a.out << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-light image enhancement toolkit", "deanet"};
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Config file of section.key = value lines");
  app.add_option("--set", g.overrides, "Override one key, e.g. --set wls.lambda=0.5 (repeatable)");
  app.add_option("--seed", g.seed, "Shortcut for --set train.seed=N");
  app.add_flag("-v,--verbose", g.verbose, "More logging (repeat for debug)");
  app.add_flag("--dump-config", g.dump, "Print the effective config and exit");

  WlsArgs wls;
  auto* wls_cmd = app.add_subcommand("wls", "Split an image into WLS base and detail layers");
  wls_cmd->add_option("--in", wls.in, "Input PNG")->required();
  wls_cmd->add_option("--out-base", wls.out_base, "Base layer PNG")->required();
  wls_cmd->add_option("--out-detail", wls.out_detail, "Detail layer PNG, stored as 0.5 + detail")->required();
  wls_cmd->add_option("--raw", wls.raw, "Float sidecar (default: base path with .dean)");

  DecomposeArgs dec;
  auto* dec_cmd = app.add_subcommand("decompose", "Reflectance and illumination of one image");
  dec_cmd->add_option("--in", dec.in, "Input PNG")->required();
  dec_cmd->add_option("--ckpt", dec.ckpt, "Checkpoint directory")->required();
  dec_cmd->add_option("--out-dir", dec.out_dir, "Output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the networks");
  train_cmd->add_option("--stage", train.stage, "1, 2 or joint")->check(CLI::IsMember({"1", "2", "joint"}));
  train_cmd->add_option("--data", train.data, "Dataset root with low/ and high/ (default data.train_dir)");
  train_cmd->add_option("--ckpt", train.ckpt, "Checkpoint directory")->required();
  train_cmd->add_flag("--resume", train.resume, "Continue from the checkpoints in --ckpt");
  train_cmd->add_option("--max-steps", train.max_steps, "Stop after this many steps in this run")->check(CLI::NonNegativeNumber);

  EnhanceArgs enh;
  auto* enh_cmd = app.add_subcommand("enhance", "Enhance one image");
  enh_cmd->add_option("--in", enh.in, "Input PNG")->required();
  enh_cmd->add_option("--ckpt", enh.ckpt, "Checkpoint directory")->required();
  enh_cmd->add_option("--out", enh.out, "Output PNG")->required();
  enh_cmd->add_option("--dump-intermediates", enh.dump, "Directory for intermediate maps");

  MetricsArgs met;
  auto* met_cmd = app.add_subcommand("metrics", "Compare an image with a reference");
  met_cmd->add_option("image", met.a, "Image PNG")->required();
  met_cmd->add_option("reference", met.b, "Reference PNG")->required();
  met_cmd->add_option("--niqe", met.niqe, "NIQE model (adds the niqe row)");
  met_cmd->add_flag("--csv", met.csv, "CSV instead of a table");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Enhance and score a paired dataset");
  ev_cmd->add_option("--data", ev.data, "Dataset root with low/ and high/ (default data.eval_dir)");
  ev_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required();
  ev_cmd->add_option("--out", ev.out, "Report directory (default --ckpt)");
  ev_cmd->add_option("--niqe", ev.niqe, "NIQE model (adds a niqe column)");

  NiqeFitArgs nf;
  auto* nf_cmd = app.add_subcommand("niqe-fit", "Fit a NIQE model on pristine images");
  nf_cmd->add_option("--in", nf.in, "Directory of PNGs")->required();
  nf_cmd->add_option("--out", nf.out, "Model file")->required();

  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  log::set_level(g.verbose >= 2 ? log::Level::debug : g.verbose == 1 ? log::Level::info : log::Level::warn);
  try {
    const Config config = effective_config(g);
    if (g.dump) {
      out << dump_config(config);
      return 0;
    }
    if (app.get_subcommands().empty()) {
      err << app.help();
      return 1;
    }
    err << "# effective config\n" << dump_config(config);
    if (wls_cmd->parsed()) cmd_wls(config, wls);
    if (dec_cmd->parsed()) cmd_decompose(config, dec);
    if (train_cmd->parsed()) cmd_train(config, train, out);
    if (enh_cmd->parsed()) cmd_enhance(config, enh);
    if (met_cmd->parsed()) cmd_metrics(met, out);
    if (ev_cmd->parsed()) cmd_evaluate(config, ev, out);
    if (nf_cmd->parsed()) cmd_niqe_fit(config, nf, out);
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace deanet::cli
