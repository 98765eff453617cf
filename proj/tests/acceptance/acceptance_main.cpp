// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
// `--only name[,name]` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "deanet/error.hpp"
#include "deanet/iqa.hpp"
#include "deanet/pipeline.hpp"
#include "deanet/png_io.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "support/wls_oracle.hpp"

using namespace deanet;
using namespace deanet::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Tensor<double> uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi, bool grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor<double>(shape, std::move(v), grad);
}

// Fixed random projection to a scalar so every output element carries its
// own weight in the gradient.
Tensor<double> project(const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, uniform(y.shape(), rng, -1, 1)));
}

NetConfig toy_net() {
  NetConfig c;
  c.depth_levels = 3;
  c.base_channels = 4;
  c.dense_growth = 4;
  return c;
}

// Zero-initialised biases put every pre-activation fed by a dead ReLU region
// exactly on a kink, where a central difference is meaningless. Jittering
// them moves the check to a generic point.
void jitter_biases(const Module<double>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (const auto& p : m.named_parameters())
    if (p.name.ends_with(".bias")) {
      Tensor<double> t = p.tensor;
      for (double& v : t.mutable_data()) v += u(rng);
    }
}

struct ModuleGradCheck {
  double max_relative_error = 0.0;
  int checked = 0;
  int skipped = 0;  // coordinates within a step of a ReLU/L1 kink
};

// Samples `count` coordinates spread over all parameter tensors of `modules`.
// A coordinate counts only when central differences at h and 2h agree, i.e.
// the loss is smooth there; the decision never looks at the analytic value.
ModuleGradCheck check_module_gradients(const std::vector<const Module<double>*>& modules,
                                       const std::function<double()>& loss, int count, std::uint64_t seed) {
  std::vector<Tensor<double>> params;
  for (const auto* m : modules)
    for (const auto& p : m->parameters()) params.push_back(p);
  std::mt19937_64 rng(seed);
  ModuleGradCheck report;
  const double h = 1e-6, floor = 1e-6;
  while (report.checked < count && report.skipped < 10 * count) {
    Tensor<double>& t = params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, t.numel() - 1)(rng);
    const double numeric = central_difference(t, i, loss, h);
    const double coarse = central_difference(t, i, loss, 2 * h);
    if (std::abs(numeric - coarse) > 1e-4 * std::max({std::abs(numeric), std::abs(coarse), floor})) {
      ++report.skipped;
      continue;
    }
    report.max_relative_error = std::max(report.max_relative_error, relative_error(t.grad()[i], numeric, floor));
    ++report.checked;
  }
  return report;
}

// ------------------------------------------------------------- criteria

Outcome gradient_integrity() {
  Outcome o;
  std::mt19937_64 rng(2024);
  struct Case {
    const char* name;
    std::function<Tensor<double>(std::vector<Tensor<double>>&)> build;
    std::vector<Shape> shapes;
  };
  const std::vector<Case> cases = {
      {"add", [](auto& in) { return add(in[0], in[1]); }, {{1, 2, 4, 4}, {1, 1, 4, 4}}},
      {"sub", [](auto& in) { return sub(in[0], in[1]); }, {{2, 3, 4, 4}, {2, 1, 4, 4}}},
      {"mul", [](auto& in) { return mul(in[0], in[1]); }, {{1, 3, 4, 4}, {1, 1, 4, 4}}},
      {"relu", [](auto& in) { return relu(in[0]); }, {{1, 3, 5, 5}}},
      {"sigmoid", [](auto& in) { return sigmoid(in[0]); }, {{1, 3, 5, 5}}},
      {"scale", [](auto& in) { return scale(in[0], -1.7); }, {{1, 2, 4, 4}}},
      {"sum", [](auto& in) { return sum(in[0]); }, {{1, 2, 4, 4}}},
      {"mean", [](auto& in) { return mean(in[0]); }, {{1, 2, 4, 4}}},
      {"conv2d", [](auto& in) { return conv2d(in[0], in[1], in[2], 1, 1); }, {{1, 3, 6, 6}, {4, 3, 3, 3}, {4}}},
      {"conv2d_stride2", [](auto& in) { return conv2d(in[0], in[1], in[2], 2, 1); }, {{1, 3, 7, 6}, {4, 3, 3, 3}, {4}}},
      {"conv2d_1x1", [](auto& in) { return conv2d(in[0], in[1], in[2], 1, 0); }, {{2, 3, 4, 4}, {1, 3, 1, 1}, {1}}},
      {"concat", [](auto& in) { return concat_channels<double>({in[0], in[1]}); }, {{1, 2, 3, 3}, {1, 3, 3, 3}}},
      {"max_over_channels", [](auto& in) { return max_over_channels(in[0]); }, {{1, 3, 4, 4}}},
      {"upsample_nearest", [](auto& in) { return upsample2x(in[0], UpsampleMode::nearest); }, {{1, 2, 4, 3}}},
      {"upsample_pixel_shuffle", [](auto& in) { return upsample2x(in[0], UpsampleMode::pixel_shuffle); }, {{1, 8, 3, 2}}},
      {"maxpool2x2", [](auto& in) { return maxpool2x2(in[0]); }, {{1, 2, 4, 6}}},
      {"l1_loss", [](auto& in) { return l1_loss(in[0], in[1]); }, {{1, 3, 4, 4}, {1, 3, 4, 4}}},
  };
  double worst_op = 0;
  int op_coords = 0;
  for (const auto& c : cases) {
    std::vector<Tensor<double>> in;
    for (const auto& s : c.shapes) in.push_back(random_tensor(s, rng, -1, 1, 1e-3));
    if (std::string(c.name) == "max_over_channels" || std::string(c.name) == "maxpool2x2") {
      auto d = in[0].mutable_data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::sin(1.0 + 0.713 * static_cast<double>(i));
    }
    if (std::string(c.name) == "l1_loss") {
      auto a = in[0].mutable_data();
      const auto b = in[1].data();
      for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) < 1e-3) a[i] += 0.01;
    }
    project(c.build(in), 5).backward();
    int per_tensor = 20;
    const auto r = check_gradients(in, [&] { return project(c.build(in), 5).item(); }, per_tensor, 17);
    worst_op = std::max(worst_op, r.max_relative_error);
    op_coords += r.checked;
    if (r.max_relative_error >= 1e-4) o.check(false, std::string(c.name) + fmt(" rel err %.2e", r.max_relative_error));
    if (r.checked < 20) o.check(false, std::string(c.name) + " checked fewer than 20 coordinates");
  }
  o.check(worst_op < 1e-4, std::to_string(cases.size()) + " ops, " + std::to_string(op_coords) +
                               " coords, max rel err " + fmt("%.2e", worst_op) + " (< 1e-4)");

  // End-to-end on toy nets.
  const NetConfig net = toy_net();
  const auto pair = lol_pair(31, 48, 48);
  const auto low_split = frequency_split(pair.low), high_split = frequency_split(pair.high);
  const auto lf_low = image_to_tensor<double>(low_split.low_freq), lf_high = image_to_tensor<double>(high_split.low_freq);
  const auto hf_low = image_to_tensor<double>(low_split.high_freq), hf_high = image_to_tensor<double>(high_split.high_freq);
  const auto reference = image_to_tensor<double>(pair.high);

  DecomNet<double> decom(net, 101);
  jitter_biases(decom, 1);
  auto stage1 = [&] { return stage1_objective(decom, lf_low, lf_high).total.item(); };
  decom.zero_grad();
  stage1_objective(decom, lf_low, lf_high).total.backward();
  const auto r1 = check_module_gradients({&decom}, stage1, 24, 3);
  o.check(r1.checked >= 20 && r1.max_relative_error < 1e-3,
          "stage-1 loss " + std::to_string(r1.checked) + " coords (" + std::to_string(r1.skipped) +
              " at kinks skipped) max rel err " + fmt("%.2e", r1.max_relative_error));

  decom.set_trainable(false);
  EnhanceNet<double> enhance(net, 102);
  AdjustNet<double> adjust(net, 103);
  jitter_biases(enhance, 2);
  jitter_biases(adjust, 3);
  const auto fx = make_feature_extractor<double>(LossSettings{});
  const Stage2Inputs<double> in{lf_low, lf_high, hf_low, hf_high, reference};
  auto stage2 = [&] { return stage2_objective(decom, enhance, adjust, fx, in).joint_terms.total.item(); };
  enhance.zero_grad();
  adjust.zero_grad();
  stage2_objective(decom, enhance, adjust, fx, in).joint_terms.total.backward();
  const auto r2e = check_module_gradients({&enhance}, stage2, 24, 4);
  const auto r2a = check_module_gradients({&adjust}, stage2, 24, 5);
  const double r2 = std::max(r2e.max_relative_error, r2a.max_relative_error);
  o.check(r2e.checked >= 20 && r2a.checked >= 20 && r2 < 1e-3,
          "stage-2 loss " + std::to_string(r2e.checked) + "+" + std::to_string(r2a.checked) + " coords (enhance+adjust, " +
              std::to_string(r2e.skipped + r2a.skipped) + " at kinks skipped) max rel err " + fmt("%.2e", r2));
  return o;
}

Outcome retinex_identity() {
  Outcome o;
  bool exact = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image img = natural_image(seed, 24 + 8 * static_cast<int>(seed), 40);
    const auto r = image_to_tensor<float>(img);
    Tensor<float> l({1, 1, img.height(), img.width()}, 1.0f), hf({1, 3, img.height(), img.width()}, 0.0f);
    const auto out = compose_retinex(Decomposition<float>{r, l}, hf);
    const auto a = out.data(), b = r.data();
    for (std::size_t i = 0; i < a.size(); ++i) exact = exact && a[i] == b[i];
    const auto rd = image_to_tensor<double>(img);
    const auto outd = compose_retinex(
        Decomposition<double>{rd, Tensor<double>({1, 1, img.height(), img.width()}, 1.0)},
        Tensor<double>({1, 3, img.height(), img.width()}, 0.0));
    const auto ad = outd.data(), bd = rd.data();
    for (std::size_t i = 0; i < ad.size(); ++i) exact = exact && ad[i] == bd[i];
  }
  o.check(exact, "compose_retinex(img, 1, 0) == img bit-exactly (float and double, 5 images)");

  double worst = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Image img = lol_pair(seed, 64, 48).low;
    for (WlsGuide guide : {WlsGuide::luminance, WlsGuide::per_channel}) {
      WlsParams p;
      p.guide = guide;
      const auto s = frequency_split(img, p);
      for (std::size_t i = 0; i < img.size(); ++i)
        worst = std::max(worst, std::abs(s.low_freq.data()[i] + s.high_freq.data()[i] - img.data()[i]));
    }
  }
  o.check(worst < 1e-6, "frequency_split |low+high-input| max " + fmt("%.1e", worst) + " (< 1e-6)");
  return o;
}

Outcome wls_oracle() {
  Outcome o;
  const WlsParams p;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image img = random_image(100 + seed, 8, 8, 3, 0.05, 0.95);
    const Image it = wls_base(img, p);
    const Image dense = dense_wls(img, p.lambda, p.alpha, p.eps);
    for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(it.data()[i] - dense.data()[i]));
  }
  o.check(worst < 1e-6, "5 seeded 8x8 vs dense solve max diff " + fmt("%.1e", worst) + " (< 1e-6)");

  const Image img = natural_image(9, 32, 32);
  WlsParams zero = p;
  zero.lambda = 0;
  const Image same = wls_base(img, zero);
  bool exact = true;
  for (std::size_t i = 0; i < img.size(); ++i) exact = exact && same.data()[i] == img.data()[i];
  o.check(exact, "lambda=0 returns input exactly");

  const Image flat(16, 20, 3, 0.37);
  const Image smooth = wls_base(flat, p);
  exact = true;
  for (std::size_t i = 0; i < flat.size(); ++i) exact = exact && smooth.data()[i] == flat.data()[i];
  o.check(exact, "constant image returns itself exactly");
  return o;
}

Outcome loss_fidelity() {
  Outcome o;
  const NetConfig net = toy_net();
  double worst_decom = 0, worst_joint = 0;
  FeatureExtractor<double> fx;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pair = lol_pair(500 + seed, 16, 24);
    const auto i_low = image_to_tensor<double>(pair.low), i_high = image_to_tensor<double>(pair.high);
    DecomNet<double> decom(net, seed);
    const auto low = decom.forward(i_low), high = decom.forward(i_high);
    const auto terms = decom_loss(i_low, low, i_high, high);
    const double oracle = decom_total_oracle(plain(i_low), plain(low.reflectance), plain(low.illumination),
                                             plain(i_high), plain(high.reflectance), plain(high.illumination));
    worst_decom = std::max(worst_decom, std::abs(terms.total.item() - oracle));

    EnhanceNet<double> enhance(net, seed + 50);
    AdjustNet<double> adjust(net, seed + 80);
    const auto hf_low = image_to_tensor<double>(frequency_split(pair.low).high_freq);
    const auto hf_high = image_to_tensor<double>(frequency_split(pair.high).high_freq);
    const auto out = enhance.forward(hf_low, low);
    const EnhanceTargets<double> tgt{hf_high, high.reflectance, high.illumination};
    const auto final_image = adjust.forward(out);
    const auto joint = joint_loss(final_image, i_high, enhance_loss(out, tgt), fx);
    const double l_enhance = enhance_oracle(plain(out.hf_enhanced), plain(hf_high), plain(out.reflectance_enhanced),
                                            plain(high.reflectance), plain(out.illumination_enhanced),
                                            plain(high.illumination));
    worst_joint =
        std::max(worst_joint, std::abs(joint.total.item() - joint_total_oracle(plain(final_image), plain(i_high), l_enhance, fx)));
  }
  o.check(worst_decom < 1e-6, "decom_loss vs scalar recomputation, 10 cases, max diff " + fmt("%.1e", worst_decom));
  o.check(worst_joint < 1e-6, "joint_loss vs scalar recomputation, 10 cases, max diff " + fmt("%.1e", worst_joint));
  o.check(kReflectanceWeight == 0.01 && kMutualWeight == 0.001 && kEnhanceWeight == 0.1, "weights 0.01, 0.001, 0.1");
  return o;
}

Config overfit_config() {
  Config c;
  c.net.base_channels = 4;
  c.net.dense_growth = 4;
  c.train.wls_cache = WlsCache::memory;
  c.train.patch_size = 192;
  c.train.steps = std::getenv("OVERFIT_STEPS") ? std::atoi(std::getenv("OVERFIT_STEPS")) : 500;
  c.train.lr = 1e-3;
  c.train.seed = 3;
  return c;
}

Outcome overfit() {
  Outcome o;
  TempDir data("overfit_data"), ckpt("overfit_ckpt");
  write_lol_dataset(data.path(), 1, 192, 192, 77);
  const PairedDataset ds = PairedDataset::from_root(data.path());
  const Config c = overfit_config();

  const auto t0 = std::chrono::steady_clock::now();
  const TrainReport s1 = train_stage1(ds, c, {ckpt.path()});
  const double first = s1.totals.front(), last = s1.totals.back();
  o.check(last <= 0.1 * first, "stage 1 L_decom " + fmt("%.4f", first) + " -> " + fmt("%.4f", last) + " in " +
                                   std::to_string(s1.steps_run) + " steps (" + fmt("%.1fx", first / last) + ", need >= 10x)");

  const TrainReport s2 = train_stage2(ds, c, {ckpt.path()});
  const auto [low, high] = ds.load(0);
  const InferenceModels models = load_inference_models(ckpt.path(), c);
  const Image out = enhance_image(low, models, c).final_image;
  const double before = psnr(low, high), after = psnr(out, high);
  o.check(after - before >= 3.0, "stage 2 PSNR " + fmt("%.2f", before) + " -> " + fmt("%.2f", after) + " dB in " +
                                     std::to_string(s2.steps_run) + " steps (+" + fmt("%.2f", after - before) +
                                     " dB, need >= 3)");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.check(secs < 900, fmt("%.0f s", secs) + " (< 15 min)");
  return o;
}

Outcome ablation() {
  Outcome o;
  for (int depth : {6, 5}) {
    NetConfig c;
    c.depth_levels = depth;
    c.base_channels = 4;
    c.dense_growth = 4;
    DecomNet<float> decom(c);
    AdjustNet<float> adjust(c);
    std::mt19937_64 rng(depth);
    std::uniform_real_distribution<float> u(0.05f, 0.95f);
    std::vector<float> v(3 * 192 * 192);
    for (float& x : v) x = u(rng);
    const Tensor<float> img({1, 3, 192, 192}, v);
    const auto d = decom.forward(img);
    const Shape dd = decom.last_deepest_shape();
    adjust.forward(EnhanceOutput<float>{Tensor<float>({1, 3, 192, 192}, 0.0f), d.reflectance, d.illumination});
    const Shape ed = adjust.last_deepest_shape();
    const int want = depth == 6 ? 6 : 12;
    o.check(dd[2] == want && dd[3] == want && ed[2] == want && ed[3] == want,
            "depth " + std::to_string(depth) + " on 192x192: deepest " + std::to_string(dd[2]) + "x" +
                std::to_string(dd[3]) + " (decom), " + std::to_string(ed[2]) + "x" + std::to_string(ed[3]) +
                " (adjust), want " + std::to_string(want) + "x" + std::to_string(want));
  }
  try {
    NetConfig c = toy_net();
    c.upsample_mode = UpsampleMode::pixel_shuffle;
    DecomNet<double> decom(c, 1);
    EnhanceNet<double> enhance(c, 2);
    AdjustNet<double> adjust(c, 3);
    std::mt19937_64 rng(8);
    const auto x = uniform({1, 3, 48, 48}, rng, 0.05, 0.95), y = uniform({1, 3, 48, 48}, rng, 0.05, 0.95);
    const auto hf = uniform({1, 3, 48, 48}, rng, -0.1, 0.1);
    const auto fx = make_feature_extractor<double>(LossSettings{});
    const auto out = stage2_objective(decom, enhance, adjust, fx, {x, y, hf, hf, y});
    const auto s1 = stage1_objective(decom, x, y);
    add(s1.total, out.joint_terms.total).backward();
    const bool ok = out.final_image.shape() == Shape{1, 3, 48, 48} && std::isfinite(out.joint_terms.total.item());
    o.check(ok, "pixel_shuffle forward+backward through all three nets");
  } catch (const Error& e) {
    o.check(false, std::string("pixel_shuffle: ") + e.what());
  }
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  const Image x = natural_image(12, 96, 96);
  const double s = ssim(x, x), f = fsim(x, x), g = gmsd(x, x);
  o.check(std::abs(s - 1) <= 1e-9, "ssim(x,x) = " + fmt("%.12f", s));
  o.check(std::abs(f - 1) <= 1e-6, "fsim(x,x) = " + fmt("%.9f", f));
  o.check(std::abs(g) <= 1e-9, "gmsd(x,x) = " + fmt("%.1e", g));
  const double m = mae(Image(32, 32, 3, 0.0), Image(32, 32, 3, 0.1));
  o.check(m == 0.1, "mae(0, 0.1) = " + fmt("%.17g", m));
  const double p = psnr(Image(32, 32, 3, 0.5), Image(32, 32, 3, 0.6));
  o.check(std::abs(p - 20) <= 1e-3, "psnr(0.5, 0.6) = " + fmt("%.6f", p) + " dB");

  std::vector<Image> corpus;
  for (std::uint64_t i = 0; i < 10; ++i) corpus.push_back(natural_image(1000 + i, 288, 288));
  const NiqeModel model = niqe_fit(corpus);
  const Image clean = natural_image(2000, 288, 288);
  const Image noisy = add_gaussian_noise(clean, 0.25, 5);
  const double nc = niqe(clean, model), nn = niqe(noisy, model);
  o.check(nc < nn, "niqe clean " + fmt("%.3f", nc) + " < noisy (sigma 0.25) " + fmt("%.3f", nn));
  return o;
}

Outcome determinism() {
  Outcome o;
  TempDir data("det_data"), a("det_a"), b("det_b");
  write_lol_dataset(data.path(), 3, 80, 96, 41);
  const PairedDataset ds = PairedDataset::from_root(data.path());
  Config c;
  c.train.patch_size = 64;
  c.train.epochs = 2;
  const auto ra = train_stage1(ds, c, {a.path()});
  const auto rb = train_stage1(ds, c, {b.path()});
  const std::string la = slurp(ra.log_path), lb = slurp(rb.log_path);
  o.check(!la.empty() && la == lb, "two default-width stage-1 runs (" + std::to_string(ra.steps_run) +
                                       " steps) give byte-identical train_log.csv");
  o.check(slurp(a.path() / kDecomCheckpoint) == slurp(b.path() / kDecomCheckpoint), "decom.dean byte-identical");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-integrity", gradient_integrity}, {"retinex-identity", retinex_identity},
      {"wls-oracle", wls_oracle},                 {"loss-fidelity", loss_fidelity},
      {"overfit-convergence", overfit},           {"architecture-ablation", ablation},
      {"metric-oracles", metric_oracles},         {"determinism", determinism},
  };
  std::string only;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--only") only = "," + std::string(argv[i + 1]) + ",";

  bool all = true;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && only.find("," + name + ",") == std::string::npos) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s: %s [%.1fs]\n", r.pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
