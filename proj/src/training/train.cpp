#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mosaic/common.hpp"
#include "mosaic/training.hpp"

namespace mosaic {
namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Independent streams per stage; epoch shuffles are sub-streams of the stage stream.
constexpr std::uint64_t kStage1Stream = 0x5301;
constexpr std::uint64_t kStage2Stream = 0x5302;

std::vector<torch::Tensor> batch_orders(std::int64_t W, int batch, std::uint64_t seed, std::uint64_t stream, int epoch) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(W));
  for (std::int64_t i = 0; i < W; ++i) idx[static_cast<std::size_t>(i)] = i;
  auto rng = make_rng(mix_seed(seed, stream), static_cast<std::uint64_t>(epoch));
  shuffle(idx, rng);
  std::vector<torch::Tensor> out;
  for (std::int64_t s = 0; s < W; s += batch) {
    const auto e = std::min<std::int64_t>(W, s + batch);
    out.push_back(torch::tensor(std::vector<std::int64_t>(idx.begin() + s, idx.begin() + e), torch::kInt64));
  }
  return out;
}

std::vector<torch::Tensor> snapshot(MosaicModelImpl& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  return out;
}

void restore(MosaicModelImpl& m, const std::vector<torch::Tensor>& snap) {
  torch::NoGradGuard ng;
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(snap[i]);
}

MosaicModel clone_model(const MosaicModel& src) {
  MosaicModel m(src->cfg);
  restore(*m, snapshot(*src.ptr()));
  m->stats = src->stats;
  m->stage = src->stage;
  m->dense_stage2 = src->dense_stage2;
  return m;
}

std::vector<torch::Tensor> params_of(torch::nn::Module& mod) { return mod.parameters(); }

[[noreturn]] void abort_non_finite(const MosaicModel& m, const std::vector<torch::Tensor>& last_good, const TrainOptions& opts,
                                   int stage, int epoch, std::size_t step, const std::string& terms) {
  restore(*m.ptr(), last_good);
  std::string where = "stage " + std::to_string(stage) + ", epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
  if (opts.failure_checkpoint) {
    save_checkpoint(m, *opts.failure_checkpoint, {{"failure", "non-finite loss"}, {"where", where}});
    where += "; last good parameters saved to " + opts.failure_checkpoint->string();
  }
  throw RuntimeFailure("non-finite loss at " + where + " (" + terms + ")");
}

std::string describe(double recon, double a, double b) {
  std::ostringstream os;
  os << "recon=" << recon << " term2=" << a << " term3=" << b;
  return os.str();
}

}  // namespace

void TrainLog::save_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << "stage,epoch,recon,gaussian_kl,temporal_kl,sparsity,lambda,total,alive,seconds\n";
  out << std::setprecision(17);
  for (const auto& e : epochs)
    out << e.stage << ',' << e.epoch << ',' << e.recon << ',' << e.gaussian_kl << ',' << e.temporal_kl << ',' << e.sparsity << ','
        << e.lambda << ',' << e.total << ',' << e.alive << ',' << e.seconds << '\n';
}

TrainLog TrainLog::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  TrainLog log;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw DataError("train log: malformed row '" + line + "'");
    EpochRecord e;
    e.stage = std::stoi(f[0]);
    e.epoch = std::stoi(f[1]);
    e.recon = std::stod(f[2]);
    e.gaussian_kl = std::stod(f[3]);
    e.temporal_kl = std::stod(f[4]);
    e.sparsity = std::stod(f[5]);
    e.lambda = std::stod(f[6]);
    e.total = std::stod(f[7]);
    e.alive = std::stoi(f[8]);
    e.seconds = std::stod(f[9]);
    log.epochs.push_back(e);
    log.seconds += e.seconds;
  }
  return log;
}

TrainResult train(const synth::TimeSeriesDataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg, const TrainOptions& opts) {
  mcfg.validate();
  tcfg.validate();
  if (ds.channels != mcfg.D) throw ConfigError("train: dataset has " + std::to_string(ds.channels) + " channels, model expects " + std::to_string(mcfg.D));
  if (ds.lag() != mcfg.lag) throw ConfigError("train: dataset windows have lag " + std::to_string(ds.lag()) + ", model expects " + std::to_string(mcfg.lag));
  const auto t_start = Clock::now();
  torch::set_num_threads(1);

  const auto data = to_tensors(ds);
  const auto W = data.x.size(0);
  const int S = mcfg.lag + 1;
  const int n = mcfg.latent_dim;

  TrainResult res;
  if (opts.resume) {
    if ((*opts.resume)->stage < 1) throw ConfigError("train: resume checkpoint has not completed Stage 1");
    if ((*opts.resume)->cfg.to_json() != mcfg.to_json()) throw ConfigError("train: resume checkpoint config differs from the model config");
    res.model = clone_model(*opts.resume);
    res.model->stage = 1;
  } else {
    res.model = make_model(mcfg, tcfg.seed);
  }
  auto& m = *res.model;

  auto emit = [&](const EpochRecord& rec) {
    res.log.epochs.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
  };

  if (!opts.resume) {
    std::vector<torch::Tensor> params;
    for (auto* mod : {static_cast<torch::nn::Module*>(m.encoder.get()), static_cast<torch::nn::Module*>(m.dense.get()),
                      static_cast<torch::nn::Module*>(m.prior.get())})
      for (auto& p : params_of(*mod)) params.push_back(p);
    torch::optim::AdamW opt(params, torch::optim::AdamWOptions(tcfg.lr).weight_decay(tcfg.weight_decay));
    auto gen = at::make_generator<at::CPUGeneratorImpl>(mix_seed(tcfg.seed, kStage1Stream));
    auto last_good = snapshot(m);
    for (int epoch = 0; epoch < tcfg.stage1_epochs; ++epoch) {
      const auto t0 = Clock::now();
      double recon = 0, gkl = 0, tkl = 0, total = 0;
      std::size_t step = 0;
      for (const auto& idx : batch_orders(W, tcfg.batch_size, tcfg.seed, kStage1Stream, epoch)) {
        auto xb = data.x.index_select(0, idx);
        auto cb = data.regime.index_select(0, idx);
        auto noise = torch::randn({xb.size(0), S, n}, gen, torch::kFloat32);
        auto t = stage1_loss(m, xb, cb, noise, tcfg);
        const double tv = t.total.item<double>();
        if (!std::isfinite(tv))
          abort_non_finite(res.model, last_good, opts, 1, epoch, step,
                           describe(t.recon.item<double>(), t.gaussian_kl.item<double>(), t.temporal_kl.item<double>()));
        opt.zero_grad();
        t.total.backward();
        torch::nn::utils::clip_grad_norm_(params, tcfg.grad_clip);
        opt.step();
        const double w = static_cast<double>(xb.size(0)) / static_cast<double>(W);
        recon += w * t.recon.item<double>();
        gkl += w * t.gaussian_kl.item<double>();
        tkl += w * t.temporal_kl.item<double>();
        total += w * tv;
        ++step;
      }
      last_good = snapshot(m);
      EpochRecord rec;
      rec.stage = 1;
      rec.epoch = epoch;
      rec.recon = recon;
      rec.gaussian_kl = gkl;
      rec.temporal_kl = tkl;
      rec.total = total;
      rec.seconds = since(t0);
      emit(rec);
    }
    m.stage = 1;
    const auto post = encode_frozen(m, data.x);
    m.stats = posterior_stats(post.mu.select(1, mcfg.lag));
    if (opts.stage1_checkpoint) save_checkpoint(res.model, *opts.stage1_checkpoint, {{"stage1_seed", tcfg.seed}});
  } else if (m.stats.empty()) {
    const auto post = encode_frozen(m, data.x);
    m.stats = posterior_stats(post.mu.select(1, mcfg.lag));
  }

  if (opts.skip_stage2 || tcfg.stage2_epochs == 0) {
    res.log.seconds = since(t_start);
    return res;
  }

  // Stage 2: encoder and prior are outside the optimizer and outside the graph.
  const auto post = encode_frozen(m, data.x);
  std::vector<torch::Tensor> params = tcfg.dense_stage2 ? params_of(*m.dense) : params_of(*m.additive);
  torch::optim::AdamW opt(params, torch::optim::AdamWOptions(tcfg.lr).weight_decay(tcfg.weight_decay));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(mix_seed(tcfg.seed, kStage2Stream));
  auto last_good = snapshot(m);
  for (int epoch = 0; epoch < tcfg.stage2_epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lambda = lambda_schedule(epoch, tcfg);
    double recon = 0, sparsity = 0, total = 0;
    int alive = -1;
    std::size_t step = 0;
    for (const auto& idx : batch_orders(W, tcfg.batch_size, tcfg.seed, kStage2Stream, epoch)) {
      auto xb = data.x.index_select(0, idx);
      Posterior pb{post.mu.index_select(0, idx), post.logvar.index_select(0, idx)};
      auto noise = torch::randn({xb.size(0), S, n}, gen, torch::kFloat32);
      auto t = stage2_loss(m, xb, pb, noise, lambda, tcfg);
      const double tv = t.total.item<double>();
      if (!std::isfinite(tv))
        abort_non_finite(res.model, last_good, opts, 2, epoch, step, describe(t.recon.item<double>(), t.sparsity.item<double>(), lambda));
      opt.zero_grad();
      t.total.backward();
      torch::nn::utils::clip_grad_norm_(params, tcfg.grad_clip);
      opt.step();
      const double w = static_cast<double>(xb.size(0)) / static_cast<double>(W);
      recon += w * t.recon.item<double>();
      sparsity += w * t.sparsity.item<double>();
      total += w * tv;
      alive = t.alive;
      ++step;
    }
    last_good = snapshot(m);
    EpochRecord rec;
    rec.stage = 2;
    rec.epoch = epoch;
    rec.recon = recon;
    rec.sparsity = sparsity;
    rec.lambda = lambda;
    rec.total = total;
    rec.alive = alive;
    rec.seconds = since(t0);
    emit(rec);
  }
  m.stage = 2;
  m.dense_stage2 = tcfg.dense_stage2;
  res.log.seconds = since(t_start);
  return res;
}

}  // namespace mosaic
