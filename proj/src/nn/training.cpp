#include "cooctex/nn/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cooctex/error.hpp"
#include "cooctex/log.hpp"
#include "cooctex/nn/cooc_loss.hpp"
#include "cooctex/util.hpp"

namespace cooctex::nn {

namespace {

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string save_optimizer(torch::optim::Optimizer& opt) {
  torch::serialize::OutputArchive archive;
  opt.save(archive);
  std::ostringstream out;
  archive.save_to(out);
  return out.str();
}

void load_optimizer(torch::optim::Optimizer& opt, const std::string& blob) {
  if (blob.empty()) return;
  torch::serialize::InputArchive archive;
  std::istringstream in(blob);
  archive.load_from(in);
  opt.load(archive);
}

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.requires_grad_(on);
}

torch::optim::AdamOptions adam_options(const TrainConfig& c) {
  return torch::optim::AdamOptions(c.learning_rate).betas({c.beta1, c.beta2});
}

std::string step_tag(const char* what, std::int64_t step, int sub = 0) {
  return std::string(what) + "/" + std::to_string(step) + "/" + std::to_string(sub);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (!(learning_rate > 0)) throw InvalidArgument("learning rate must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  if (lambda_gp < 0 || lambda_cooc < 0) throw InvalidArgument("loss weights must be non-negative");
  if (batch_size < 1) throw InvalidArgument("batch size must be positive");
  if (n_critic < 1) throw InvalidArgument("n_critic must be at least 1");
}

void TrainConfig::write(KeyValueConfig& out) const {
  out.set("epochs", std::to_string(epochs));
  out.set("lr", format_double(learning_rate));
  out.set("beta1", format_double(beta1));
  out.set("beta2", format_double(beta2));
  out.set("lambda_gp", format_double(lambda_gp));
  out.set("lambda_cooc", format_double(lambda_cooc));
  out.set("batch_size", std::to_string(batch_size));
  out.set("n_critic", std::to_string(n_critic));
  out.set("seed", std::to_string(seed));
}

TrainConfig TrainConfig::read(const KeyValueConfig& in) {
  TrainConfig c;
  c.epochs = static_cast<int>(in.get_int("epochs", c.epochs));
  c.learning_rate = in.get_double("lr", c.learning_rate);
  c.beta1 = in.get_double("beta1", c.beta1);
  c.beta2 = in.get_double("beta2", c.beta2);
  c.lambda_gp = in.get_double("lambda_gp", c.lambda_gp);
  c.lambda_cooc = in.get_double("lambda_cooc", c.lambda_cooc);
  c.batch_size = static_cast<int>(in.get_int("batch_size", c.batch_size));
  c.n_critic = static_cast<int>(in.get_int("n_critic", c.n_critic));
  c.seed = std::stoull(in.get_string("seed", "0"));
  c.validate();
  return c;
}

std::string TrainLog::to_csv(const std::vector<std::string>& notes) const {
  std::ostringstream s;
  for (const std::string& n : notes) s << "# " << n << '\n';
  s << kHeader << '\n';
  s.precision(10);
  for (const StepRecord& r : rows_)
    s << r.epoch << ',' << r.step << ',' << r.d_loss << ',' << r.wasserstein << ','
      << r.gradient_penalty << ',' << r.g_adversarial << ',' << r.cooc_loss << ',' << r.g_loss
      << ',' << r.seconds << '\n';
  return s.str();
}

void TrainLog::write_csv(const std::filesystem::path& path, const std::vector<std::string>& notes) const {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << to_csv(notes);
}

TrainLog TrainLog::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  TrainLog log;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kHeader) throw FormatError("training log: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::istringstream fields(line);
    StepRecord r;
    char comma = 0;
    fields >> r.epoch >> comma >> r.step >> comma >> r.d_loss >> comma >> r.wasserstein >> comma >>
        r.gradient_penalty >> comma >> r.g_adversarial >> comma >> r.cooc_loss >> comma >>
        r.g_loss >> comma >> r.seconds;
    if (!fields) throw FormatError("training log: malformed row '" + line + "'");
    log.append(r);
  }
  return log;
}

Trainer::Trainer(ModelCheckpoint& checkpoint, TrainConfig config)
    : checkpoint_(checkpoint),
      config_(std::move(config)),
      g_optimizer_(checkpoint.generator->parameters(), adam_options(config_)),
      d_optimizer_(checkpoint.discriminator->parameters(), adam_options(config_)) {
  config_.validate();
  load_optimizer(g_optimizer_, checkpoint_.generator_optimizer);
  load_optimizer(d_optimizer_, checkpoint_.discriminator_optimizer);
}

CriticStep Trainer::discriminator_step(const torch::Tensor& real, const torch::Tensor& cond,
                                       std::uint64_t seed, const torch::Tensor& mix) {
  Generator& g = checkpoint_.generator;
  Discriminator& d = checkpoint_.discriminator;
  g->train();
  d->train();
  set_requires_grad(*d, true);
  const auto batch = real.size(0);

  CriticStep out;
  out.real = real;
  {
    torch::NoGradGuard no_grad;
    const torch::Tensor z = make_noise(batch, cond.size(2), cond.size(3),
                                       g->config().noise_channels, derive_seed(seed, "noise"));
    out.fake = g->forward(z, cond);
  }
  out.mix = mix.defined() ? mix.to(torch::kFloat) : make_uniform({batch}, derive_seed(seed, "mix"));
  const torch::Tensor u = out.mix.view({-1, 1, 1, 1});
  out.interpolates = (u * real + (1 - u) * out.fake).detach().requires_grad_(true);

  d_optimizer_.zero_grad();
  const torch::Tensor wasserstein = d->forward(out.fake, cond).mean() - d->forward(real, cond).mean();
  torch::Tensor loss = wasserstein;
  torch::Tensor gp = torch::zeros({}, torch::kFloat);
  if (config_.lambda_gp > 0) {
    const torch::Tensor scores = d->forward(out.interpolates, cond);
    const torch::Tensor grad = torch::autograd::grad({scores.sum()}, {out.interpolates},
                                                     /*grad_outputs=*/{}, /*retain_graph=*/true,
                                                     /*create_graph=*/true)[0];
    const torch::Tensor norms = grad.flatten(1).pow(2).sum(1).sqrt();
    gp = (norms - 1).pow(2).mean();
    loss = loss + config_.lambda_gp * gp;
  }
  loss.backward();
  d_optimizer_.step();
  out.interpolates = out.interpolates.detach();

  out.loss = loss.item<double>();
  out.wasserstein = wasserstein.item<double>();
  out.gradient_penalty = gp.item<double>();
  return out;
}

GeneratorStep Trainer::generator_step(const torch::Tensor& cond, const std::vector<CoocTensor>& raw,
                                      std::uint64_t seed) {
  Generator& g = checkpoint_.generator;
  Discriminator& d = checkpoint_.discriminator;
  g->train();
  d->train();
  set_requires_grad(*d, false);
  const torch::Tensor z = make_noise(cond.size(0), cond.size(2), cond.size(3),
                                     g->config().noise_channels, derive_seed(seed, "noise"));
  g_optimizer_.zero_grad();
  const torch::Tensor fake = g->forward(z, cond);
  const torch::Tensor adversarial = -d->forward(fake, cond).mean();
  const StatsBundle& stats = checkpoint_.stats;
  torch::Tensor loss = adversarial;
  torch::Tensor cooc;
  if (config_.lambda_cooc > 0) {
    cooc = cooc_loss(fake, raw, stats.palette, stats.params).mean();
    loss = loss + config_.lambda_cooc * cooc;
  } else {
    cooc = cooc_loss(fake.detach(), raw, stats.palette, stats.params).mean();
  }
  loss.backward();
  g_optimizer_.step();
  set_requires_grad(*d, true);

  GeneratorStep out;
  out.adversarial = adversarial.item<double>();
  out.cooc = cooc.item<double>();
  out.loss = loss.item<double>();
  return out;
}

void Trainer::store_optimizer_state() {
  checkpoint_.generator_optimizer = save_optimizer(g_optimizer_);
  checkpoint_.discriminator_optimizer = save_optimizer(d_optimizer_);
}

Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& indices) {
  std::vector<Image> crops;
  std::vector<CoocTensor> normalized;
  Batch b;
  for (std::size_t i : indices) {
    crops.push_back(dataset.crops()[i].pixels);
    normalized.push_back(dataset.normalized(i));
    b.raw.push_back(dataset.raw(i));
  }
  b.crops = to_torch(crops);
  b.conditions = to_torch(normalized);
  return b;
}

TrainLog train(const TrainConfig& config, const Dataset& dataset, ModelCheckpoint& checkpoint,
               const TrainOptions& options) {
  config.validate();
  if (!(dataset.stats().palette == checkpoint.stats.palette) ||
      !(dataset.stats().params == checkpoint.stats.params) || dataset.stats().scale != checkpoint.stats.scale)
    throw InvalidArgument("train: dataset statistics do not match the checkpoint's");
  if (dataset.indices(Split::kTrain).empty()) throw InvalidArgument("train: empty train split");

  TrainLog log;
  if (checkpoint.epoch > 0 && !options.log_path.empty() && std::filesystem::exists(options.log_path)) {
    const TrainLog previous = TrainLog::read_csv(options.log_path);
    for (const StepRecord& r : previous.rows())
      if (r.epoch < checkpoint.epoch) log.append(r);
  }
  KeyValueConfig cfg_text;
  config.write(cfg_text);
  checkpoint.train_config = cfg_text.to_string();

  const std::vector<std::string> notes = {
      "device: cpu, intra-op threads " + std::to_string(torch::get_num_threads()),
      "nondeterministic kernels: none on this device; results repeat for equal seed, config and "
      "thread count"};

  Trainer trainer(checkpoint, config);
  for (int epoch = checkpoint.epoch; epoch < config.epochs; ++epoch) {
    const auto batches = dataset.batches(Split::kTrain, config.batch_size, epoch);
    for (const auto& indices : batches) {
      const auto start = std::chrono::steady_clock::now();
      const Batch batch = make_batch(dataset, indices);
      const std::int64_t step = checkpoint.step;
      CriticStep critic;
      for (int c = 0; c < config.n_critic; ++c)
        critic = trainer.discriminator_step(batch.crops, batch.conditions,
                                            derive_seed(config.seed, step_tag("critic", step, c)));
      const GeneratorStep gen =
          trainer.generator_step(batch.conditions, batch.raw, derive_seed(config.seed, step_tag("gen", step)));
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log.append({epoch, step, critic.loss, critic.wasserstein, critic.gradient_penalty,
                  gen.adversarial, gen.cooc, gen.loss, seconds});
      ++checkpoint.step;

      if (!std::isfinite(critic.loss) || !std::isfinite(gen.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " step " << step << ": d_loss=" << critic.loss
            << " gp=" << critic.gradient_penalty << " g_adv=" << gen.adversarial
            << " cooc=" << gen.cooc;
        if (!options.checkpoint_path.empty()) {
          trainer.store_optimizer_state();
          const auto snapshot = std::filesystem::path(options.checkpoint_path.string() + ".diverged");
          save_checkpoint(checkpoint, snapshot);
          msg << "; snapshot written to " << snapshot.string();
        }
        if (!options.log_path.empty()) log.write_csv(options.log_path, notes);
        throw TrainingDiverged(msg.str());
      }
    }
    checkpoint.epoch = epoch + 1;
    trainer.store_optimizer_state();
    double cooc_sum = 0;
    std::size_t rows = 0;
    for (const StepRecord& r : log.rows())
      if (r.epoch == epoch) {
        cooc_sum += r.cooc_loss;
        ++rows;
      }
    std::ostringstream msg;
    msg << "epoch " << epoch + 1 << "/" << config.epochs << ": " << rows
        << " steps, mean co-occurrence loss " << (rows ? cooc_sum / rows : 0.0);
    log::info(msg.str());
    if (!options.checkpoint_path.empty()) save_checkpoint(checkpoint, options.checkpoint_path);
    if (!options.log_path.empty()) log.write_csv(options.log_path, notes);
    if (options.on_epoch) options.on_epoch(checkpoint.clone(), log);
  }
  return log;
}

}  // namespace cooctex::nn
