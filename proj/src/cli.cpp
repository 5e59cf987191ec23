#include "madg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "madg/bound_eval.hpp"
#include "madg/datasets.hpp"
#include "madg/errors.hpp"
#include "madg/finite_oracle.hpp"
#include "madg/models.hpp"
#include "madg/svg_plot.hpp"
#include "madg/training.hpp"

namespace madg {

namespace fs = std::filesystem;

namespace {

/// Bad flag values; maps to the usage exit code.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& s, const std::string& flag) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw UsageError(flag + ": '" + s + "' is not a number");
  return v;
}

std::vector<double> doubles(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  for (const std::string& s : split(text, ',')) out.push_back(to_double(s, flag));
  return out;
}

std::vector<std::size_t> sizes_list(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> out;
  for (const std::string& s : split(text, ',')) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') throw UsageError(flag + ": '" + s + "' is not a nonnegative integer");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 4) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_out(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out = open_out(path);
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

struct LoadedDomain {
  DomainDataset data;
  std::string name;
};

std::vector<LoadedDomain> load_domains(const std::string& list, const std::string& flag) {
  std::vector<LoadedDomain> out;
  for (const std::string& path : split(list, ',')) {
    if (!fs::exists(path)) throw UsageError(flag + ": no such file '" + path + "'");
    std::vector<DomainDataset> ds = load_csv(fs::path(path));
    for (DomainDataset& d : ds) {
      std::string name = fs::path(path).stem().string();
      if (ds.size() > 1) name += "#" + std::to_string(d.domain_id);
      out.push_back({std::move(d), std::move(name)});
    }
  }
  return out;
}

std::vector<DomainDataset> datasets_of(const std::vector<LoadedDomain>& v) {
  std::vector<DomainDataset> out;
  for (const LoadedDomain& d : v) out.push_back(d.data);
  return out;
}

// ---------------------------------------------------------------------------------------
// Flags shared by train, ablate and bound.

struct TrainFlags {
  std::string algo = "madg";
  std::string sources;
  std::string holdout;
  std::string target;
  std::string pi;
  std::string alpha;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::optional<double> aux_lr;
  double rho_hat = 1.5;
  std::size_t epochs = 20;
  std::size_t steps_per_epoch = 0;
  std::size_t batch = 32;
  std::string weight_scheme = "one";
  std::string pair_scheme = "full";
  double grl_eta = 1.0;
  std::string grl_schedule = "constant";
  std::string lr_schedule = "constant";
  std::string update_order = "two_step";
  double transfer_grad_clip = 0.0;
  std::string hidden = "64,64";
  std::size_t feature_dim = 32;
  std::uint64_t seed = 0;
};

void add_data_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--sources", f.sources, "Comma-separated source CSV files");
  app->add_option("--holdout", f.holdout, "Comma-separated held-out CSV files");
}

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--algo", f.algo, "madg | erm | da")->capture_default_str();
  app->add_option("--target", f.target, "Unlabeled target CSV for --algo da (default: first holdout)");
  app->add_option("--pi", f.pi, "Comma-separated source weights (default uniform)");
  app->add_option("--alpha", f.alpha, "Comma-separated source weights for --algo da (default uniform)");
  app->add_option("--lr", f.lr, "Learning rate")->capture_default_str();
  app->add_option("--momentum", f.momentum, "SGD momentum")->capture_default_str();
  app->add_option("--weight-decay", f.weight_decay, "Weight decay")->capture_default_str();
  app->add_option("--aux-lr", f.aux_lr, "Auxiliary head learning rate (default: --lr)");
  app->add_option("--rho-hat", f.rho_hat, "Margin factor rho_hat = exp(rho), > 0")->capture_default_str();
  app->add_option("--epochs", f.epochs, "Number of epochs")->capture_default_str();
  app->add_option("--steps-per-epoch", f.steps_per_epoch, "Steps per epoch (0: cover the longest source)")
      ->capture_default_str();
  app->add_option("--batch", f.batch, "Samples per domain per step")->capture_default_str();
  app->add_option("--weight-scheme", f.weight_scheme, "one | average | dynamic")->capture_default_str();
  app->add_option("--pair-scheme", f.pair_scheme, "full | reduced")->capture_default_str();
  app->add_option("--grl-eta", f.grl_eta, "Gradient reversal coefficient")->capture_default_str();
  app->add_option("--grl-schedule", f.grl_schedule, "constant | ramp")->capture_default_str();
  app->add_option("--lr-schedule", f.lr_schedule, "constant | inverse_decay")->capture_default_str();
  app->add_option("--update-order", f.update_order, "two_step | joint")->capture_default_str();
  app->add_option("--transfer-grad-clip", f.transfer_grad_clip, "Norm cap on transfer-step gradients (0: off)")
      ->capture_default_str();
  app->add_option("--hidden", f.hidden, "Hidden layer widths")->capture_default_str();
  app->add_option("--feature-dim", f.feature_dim, "Feature width")->capture_default_str();
}

TrainConfig make_train_config(const TrainFlags& f) {
  TrainConfig c;
  c.learning_rate = f.lr;
  c.momentum = f.momentum;
  c.weight_decay = f.weight_decay;
  c.aux_learning_rate = f.aux_lr;
  c.rho_hat = f.rho_hat;
  c.epochs = f.epochs;
  c.steps_per_epoch = f.steps_per_epoch;
  c.batch_per_domain = f.batch;
  c.pi = doubles(f.pi, "--pi");
  c.grl_eta = f.grl_eta;
  c.transfer_grad_clip = f.transfer_grad_clip;
  c.seed = f.seed;
  c.model.hidden_dims = sizes_list(f.hidden, "--hidden");
  c.model.feature_dim = f.feature_dim;
  auto flag = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const ContractError& e) {
      throw UsageError(std::string(name) + ": " + e.what());
    }
  };
  c.weight_scheme = flag("--weight-scheme", [&] { return parse_weight_scheme(f.weight_scheme); });
  c.pair_scheme = flag("--pair-scheme", [&] { return parse_pair_scheme(f.pair_scheme); });
  c.grl_schedule = flag("--grl-schedule", [&] { return parse_grl_schedule(f.grl_schedule); });
  c.lr_schedule = flag("--lr-schedule", [&] { return parse_lr_schedule(f.lr_schedule); });
  c.update_order = flag("--update-order", [&] { return parse_update_order(f.update_order); });
  if (!(f.rho_hat > 0.0)) throw UsageError("--rho-hat: must be positive, got " + real(f.rho_hat));
  if (f.batch < 1) throw UsageError("--batch: must be at least 1");
  flag("training flags", [&] {
    c.validate();
    return 0;
  });
  return c;
}

struct TrainRun {
  TrainResult result;
  std::size_t num_pairs = 0;
};

/// Trains per --algo. `eval` domains are evaluated at every epoch end.
TrainRun train_by_algo(const TrainFlags& f, const TrainConfig& config, const std::vector<DomainDataset>& sources,
                       const std::vector<DomainDataset>& holdouts, const TrainOptions& options) {
  TrainRun run;
  if (f.algo == "madg") {
    if (sources.size() < 2) throw UsageError("--sources: madg needs at least two source domains");
    run.num_pairs = PairIndex::make(sources.size(), config.pair_scheme).size();
    run.result = madg_train(sources, config, options);
  } else if (f.algo == "erm") {
    if (sources.empty()) throw UsageError("--sources: at least one source domain is required");
    run.result = erm_train(sources, config, options);
  } else if (f.algo == "da") {
    if (sources.empty()) throw UsageError("--sources: at least one labeled source domain is required");
    std::optional<DomainDataset> target;
    if (!f.target.empty()) {
      target = load_domains(f.target, "--target").front().data;
    } else if (!holdouts.empty()) {
      target = holdouts.front();
    } else {
      throw UsageError("--target: da needs a target domain (or a --holdout)");
    }
    run.num_pairs = sources.size();
    run.result = da_train(sources, *target, doubles(f.alpha, "--alpha"), config, options);
  } else {
    throw UsageError("--algo: expected madg, erm or da, got '" + f.algo + "'");
  }
  return run;
}

// ---------------------------------------------------------------------------------------

struct Common {
  std::string config;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
};

int cmd_gen_data(std::ostream& out, const Common& common, const std::string& kind, const std::string& domains,
                 const std::string& shifts, std::size_t n, std::optional<double> label_noise, double feature_noise,
                 std::size_t classes, const std::string& prefix) {
  SyntheticSpec spec;
  try {
    spec.kind = parse_synthetic_kind(kind);
  } catch (const ContractError& e) {
    throw UsageError(std::string("--kind: ") + e.what());
  }
  spec.n = n;
  spec.seed = common.seed;
  spec.feature_noise = feature_noise;
  spec.num_classes = classes;
  spec.label_noise = label_noise.value_or(spec.kind == SyntheticKind::colored ? 0.25 : 0.0);
  if (spec.kind == SyntheticKind::gaussian_shift) {
    for (const std::string& s : split(shifts.empty() ? domains : shifts, ',')) {
      const auto xy = split(s, ':');
      if (xy.size() != 2) throw UsageError("--shifts: expected x:y pairs, got '" + s + "'");
      spec.shifts.push_back({to_double(xy[0], "--shifts"), to_double(xy[1], "--shifts")});
    }
  } else {
    spec.domain_params = doubles(domains, "--domains");
  }
  if (spec.kind == SyntheticKind::colored) {
    for (double c : spec.domain_params) {
      if (!(c >= 0.0 && c <= 1.0)) throw UsageError("--domains: color correlation " + real(c) + " is outside [0, 1]");
    }
  }
  if (!(spec.label_noise >= 0.0 && spec.label_noise < 0.5)) throw UsageError("--label-noise: must lie in [0, 0.5)");
  if (n < 1) throw UsageError("--n: must be at least 1");
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw UsageError(std::string(spec.kind == SyntheticKind::gaussian_shift ? "--shifts: " : "--domains: ") + e.what());
  }
  const std::vector<DomainDataset> data = generate(spec);
  fs::create_directories(common.out_dir);
  for (const DomainDataset& d : data) {
    const fs::path path = fs::path(common.out_dir) / (prefix + "_" + std::to_string(d.domain_id) + ".csv");
    std::ofstream file = open_out(path);
    save_csv(std::span<const DomainDataset>(&d, 1), file);
    if (!file) throw std::runtime_error("failed writing " + path.string());
    std::size_t per_class[8] = {};
    for (std::size_t y : d.labels) per_class[std::min<std::size_t>(y, 7)]++;
    out << path.string() << ": " << d.size() << " samples, dim " << d.dim;
    for (std::size_t c = 0; c < std::max<std::size_t>(d.num_classes(), 2) && c < 8; ++c) {
      out << ", class " << c << " " << per_class[c];
    }
    out << '\n';
  }
  return kExitOk;
}

int cmd_train(std::ostream& out, std::ostream& err, const Common& common, TrainFlags flags,
              const std::string& metrics_path, const std::string& checkpoint_path) {
  flags.seed = common.seed;
  const TrainConfig config = make_train_config(flags);
  const auto sources = load_domains(flags.sources, "--sources");
  const auto holdouts = load_domains(flags.holdout, "--holdout");
  const std::vector<DomainDataset> src = datasets_of(sources), hold = datasets_of(holdouts);

  TrainOptions options;
  for (const DomainDataset& d : src) options.eval_domains.push_back(&d);
  for (const DomainDataset& d : hold) options.eval_domains.push_back(&d);

  const fs::path mpath = metrics_path.empty() ? fs::path(common.out_dir) / "metrics.csv" : fs::path(metrics_path);
  const fs::path cpath = checkpoint_path.empty() ? fs::path(common.out_dir) / "model.ckpt" : fs::path(checkpoint_path);
  std::ofstream metrics = open_out(mpath);
  std::size_t pairs = 0;
  if (flags.algo == "madg") pairs = PairIndex::make(std::max<std::size_t>(src.size(), 2), config.pair_scheme).size();
  if (flags.algo == "da") pairs = src.size();
  const bool weights = config.weight_scheme == WeightScheme::dynamic && pairs > 0;
  metrics << metrics_header(pairs, options.eval_domains.size(), weights) << '\n';
  options.on_epoch = [&](std::size_t, std::span<const MetricsRecord> records) {
    for (const MetricsRecord& r : records) write_metrics_row(metrics, r, pairs, options.eval_domains.size(), weights);
    metrics.flush();
  };

  const TrainRun run = train_by_algo(flags, config, src, hold, options);
  for (const std::string& w : run.result.warnings) err << "warning: " << w << '\n';
  if (!metrics) throw std::runtime_error("failed writing " + mpath.string());
  metrics.close();
  ensure_parent(cpath);
  save_checkpoint(run.result.model, cpath);

  out << "algo " << flags.algo << ", seed " << config.seed << ", " << run.result.metrics.size() << " steps\n";
  out << std::left << std::setw(8) << "role" << std::setw(28) << "domain" << "accuracy\n";
  for (const auto& d : sources) out << std::setw(8) << "source" << std::setw(28) << d.name << fixed(evaluate(run.result.model, d.data)) << '\n';
  for (const auto& d : holdouts) out << std::setw(8) << "holdout" << std::setw(28) << d.name << fixed(evaluate(run.result.model, d.data)) << '\n';
  out << "metrics: " << mpath.string() << "\ncheckpoint: " << cpath.string() << '\n';
  return kExitOk;
}

int cmd_verify_theory(std::ostream& out, const Common& common, std::size_t instances, std::size_t grid,
                      bool inject, const std::string& report_path) {
  if (instances < 1) throw UsageError("--instances: must be at least 1");
  if (grid < 1) throw UsageError("--grid: must be at least 1");
  SuiteOptions options;
  options.instances = instances;
  options.seed = common.seed;
  options.resolution = grid;
  if (inject) options.check.rhs_offset = -1.0;
  const std::vector<CheckReport> reports = run_theory_suite(options);

  const fs::path path = report_path.empty() ? fs::path(common.out_dir) / "theory_report.csv" : fs::path(report_path);
  std::string text = report_header() + "\n";
  std::map<std::string, std::pair<std::size_t, double>> summary;
  std::vector<std::string> order;
  std::size_t violations = 0;
  for (const CheckReport& r : reports) {
    text += format_report_line(r) + "\n";
    auto [it, inserted] = summary.try_emplace(r.check, 0, std::numeric_limits<double>::infinity());
    if (inserted) order.push_back(r.check);
    it->second.first += r.violated ? 1 : 0;
    it->second.second = std::min(it->second.second, r.slack);
    violations += r.violated ? 1 : 0;
  }
  write_file(path, text);
  for (const std::string& name : order) {
    out << std::left << std::setw(22) << name << " instances " << instances << "  violations "
        << summary[name].first << "  min slack " << summary[name].second << '\n';
  }
  out << "report: " << path.string() << '\n';
  if (violations > 0) {
    out << violations << " violation(s) detected\n";
    return kExitViolation;
  }
  return kExitOk;
}

int cmd_bound(std::ostream& out, const Common& common, const TrainFlags& data, const std::string& checkpoint,
              double delta, std::optional<double> rho_flag, const std::string& pi_text, std::size_t sigma_draws,
              std::size_t ascent_steps, std::size_t bins, bool oracle, std::size_t oracle_samples,
              const std::string& report_path) {
  if (!(delta > 0.0 && delta < 1.0)) throw UsageError("--delta: must lie in (0, 1)");
  const fs::path path = report_path.empty() ? fs::path(common.out_dir) / "bound_report.txt" : fs::path(report_path);
  if (oracle) {
    const OracleInstance inst = random_instance(common.seed);
    const OracleBound ob = oracle_bound(inst, delta, oracle_samples);
    std::string text = format_bound_report(ob.report);
    text += "unseen_zero_one_error = " + real(ob.unseen_error) + " (exact)\n";
    write_file(path, text);
    out << text << "report: " << path.string() << '\n';
    return kExitOk;
  }
  if (checkpoint.empty()) throw UsageError("--checkpoint: required unless --oracle is set");
  const MadgModel model = load_checkpoint(fs::path(checkpoint));
  const auto sources = load_domains(data.sources, "--sources");
  const auto holdouts = load_domains(data.holdout, "--holdout");
  if (sources.size() < 2) throw UsageError("--sources: the bound needs at least two source domains");
  const double rho = rho_flag.value_or(std::log(1.5));
  if (!(rho > 0.0)) throw UsageError("--rho: must be positive");
  const std::vector<DomainDataset> src = datasets_of(sources);

  BoundInputs in;
  in.num_classes = model.config.num_classes;
  in.rho = rho;
  const std::vector<double> pi = doubles(pi_text, "--pi");
  try {
    in.pi = pi.empty() ? SimplexWeights::uniform(src.size()) : SimplexWeights(pi);
  } catch (const ContractError& e) {
    throw UsageError(std::string("--pi: ") + e.what());
  }
  if (in.pi.size() != src.size()) throw UsageError("--pi: expected one weight per source domain");
  for (const DomainDataset& d : src) {
    in.source_margin_errors.push_back(margin_error(predict_scores(model, d.as_matrix()), d.labels, rho));
    in.sample_sizes.push_back(d.size());
  }
  const NetworkDiscrepancy eps = network_epsilon(model, src, rho);
  in.epsilon_hat_max = eps.max;
  in.epsilon_hat_sum = eps.sum;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t k = 0; k < src.size(); ++k) {
      if (i != k && eps.ordered[i][k] > best) {
        best = eps.ordered[i][k];
        in.pair_i = i;
        in.pair_k = k;
      }
    }
  }

  std::vector<const LoadedDomain*> all;
  for (const auto& d : sources) all.push_back(&d);
  for (const auto& d : holdouts) all.push_back(&d);
  for (std::size_t a = 0; a < all.size(); ++a) {
    for (std::size_t b = a + 1; b < all.size(); ++b) {
      in.js_terms.push_back({"js(" + all[a]->name + "," + all[b]->name + ")",
                             js_divergence_histogram(all[a]->data, all[b]->data, bins), Provenance::estimated});
    }
  }
  if (!holdouts.empty()) in.gamma = Estimate{gamma_estimate(holdouts.front().data, src, bins), Provenance::estimated};

  double bound = 0.0;
  for (const Tensor* t : {&model.head.weight, &model.head.bias}) {
    for (double v : t->data()) bound = std::max(bound, std::abs(v));
  }
  if (bound == 0.0) bound = 1.0;
  AscentOptions ascent;
  ascent.draws = sigma_draws;
  ascent.steps = ascent_steps;
  ascent.seed = common.seed;
  auto readout = [&](const DomainDataset& d, std::vector<std::size_t> columns) {
    ReadoutFamily fam{extract_features(model, d.as_matrix()), std::move(columns), model.config.num_classes, bound};
    return rademacher_ascent(fam, model.head.weight, model.head.bias, ascent).value;
  };
  auto pair_term = [&](std::size_t i) {
    const DomainDataset& d = src[i];
    return Estimate{readout(d, predict_labels(predict_scores(model, d.as_matrix()))), Provenance::estimated_lower_bound};
  };
  in.rademacher_pair_i = pair_term(in.pair_i);
  in.rademacher_pair_k = pair_term(in.pair_k);
  for (const DomainDataset& d : src) {
    double v = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < model.config.num_classes; ++c) v = std::max(v, readout(d, std::vector<std::size_t>(d.size(), c)));
    in.rademacher_const.push_back(Estimate{v, Provenance::estimated_lower_bound});
  }

  const BoundReport report = assemble_bound_report(in, delta);
  const std::string text = format_bound_report(report);
  write_file(path, text);
  out << text << "report: " << path.string() << '\n';
  return kExitOk;
}

int cmd_ablate(std::ostream& out, std::ostream& err, const Common& common, TrainFlags flags, const std::string& axis,
               const std::string& values_text, const std::string& seeds_text, const std::string& summary_path) {
  const std::vector<std::string> values = split(values_text, ',');
  if (values.empty()) throw UsageError("--values: at least one value is required");
  std::vector<std::size_t> seeds = sizes_list(seeds_text, "--seeds");
  if (seeds.empty()) seeds.push_back(common.seed);
  static const std::vector<std::string> axes = {"rho-hat", "pair-scheme", "weight-scheme", "grl-eta", "lr", "update-order"};
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) {
    throw UsageError("--axis: expected one of rho-hat, pair-scheme, weight-scheme, grl-eta, lr, update-order");
  }
  const auto sources = load_domains(flags.sources, "--sources");
  const auto holdouts = load_domains(flags.holdout, "--holdout");
  if (holdouts.empty()) throw UsageError("--holdout: ablation needs a held-out domain");
  const std::vector<DomainDataset> src = datasets_of(sources), hold = datasets_of(holdouts);

  const fs::path path = summary_path.empty() ? fs::path(common.out_dir) / ("ablation_" + axis + ".csv") : fs::path(summary_path);
  std::ofstream summary = open_out(path);
  summary << "axis_value,seed,holdout_accuracy\n";
  for (const std::string& value : values) {
    TrainFlags cell = flags;
    if (axis == "rho-hat") cell.rho_hat = to_double(value, "--values");
    if (axis == "pair-scheme") cell.pair_scheme = value;
    if (axis == "weight-scheme") cell.weight_scheme = value;
    if (axis == "grl-eta") cell.grl_eta = to_double(value, "--values");
    if (axis == "lr") cell.lr = to_double(value, "--values");
    if (axis == "update-order") cell.update_order = value;
    double total = 0.0;
    for (std::size_t seed : seeds) {
      cell.seed = seed;
      const TrainConfig config = make_train_config(cell);
      const TrainRun run = train_by_algo(cell, config, src, hold, {});
      for (const std::string& w : run.result.warnings) err << "warning: " << w << '\n';
      const double acc = evaluate(run.result.model, hold.front());
      total += acc;
      summary << value << ',' << seed << ',' << real(acc) << '\n';
      summary.flush();
    }
    out << axis << " = " << std::left << std::setw(10) << value << " mean holdout accuracy "
        << fixed(total / static_cast<double>(seeds.size())) << " over " << seeds.size() << " seed(s)\n";
  }
  if (!summary) throw std::runtime_error("failed writing " + path.string());
  out << "summary: " << path.string() << '\n';
  return kExitOk;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    return std::nullopt;
  }
};

CsvTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw SchemaError(path + ": file is empty");
  t.header = split(trim(line), ',');
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(trim(line));
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && trim(line).back() == ',') cells.emplace_back();
    if (cells.size() != t.header.size()) {
      throw SchemaError(path + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.rows.empty()) throw SchemaError(path + ": no data rows");
  return t;
}

double cell_value(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  return *end == '\0' ? v : std::numeric_limits<double>::quiet_NaN();
}

int cmd_plot(std::ostream& out, const Common& common, const std::string& inputs, const std::string& output,
             const std::string& title) {
  const std::vector<std::string> files = split(inputs, ',');
  if (files.empty()) throw UsageError("--inputs: at least one CSV file is required");
  std::vector<CsvTable> tables;
  for (const std::string& f : files) tables.push_back(read_table(f));
  const bool summary = tables.front().column("axis_value").has_value();
  PlotSpec spec;
  if (summary) {
    spec.title = title.empty() ? "Held-out accuracy by ablation value" : title;
    spec.x_label = "axis value";
    spec.y_label = "mean held-out accuracy";
    for (std::size_t f = 0; f < files.size(); ++f) {
      const CsvTable& t = tables[f];
      const auto vc = t.column("axis_value"), ac = t.column("holdout_accuracy");
      if (!vc || !ac) throw SchemaError(files[f] + ": expected columns axis_value and holdout_accuracy");
      std::map<std::string, std::pair<double, std::size_t>> acc;
      for (const auto& row : t.rows) {
        const auto& v = row[*vc];
        if (std::find(spec.x_categories.begin(), spec.x_categories.end(), v) == spec.x_categories.end()) {
          spec.x_categories.push_back(v);
        }
        acc[v].first += cell_value(row[*ac]);
        acc[v].second += 1;
      }
      PlotSeries s;
      s.label = fs::path(files[f]).stem().string();
      for (std::size_t c = 0; c < spec.x_categories.size(); ++c) {
        const auto it = acc.find(spec.x_categories[c]);
        if (it == acc.end()) continue;
        s.x.push_back(static_cast<double>(c));
        s.y.push_back(it->second.first / static_cast<double>(it->second.second));
      }
      spec.series.push_back(std::move(s));
    }
  } else {
    spec.title = title.empty() ? "Training losses" : title;
    spec.x_label = "step";
    spec.y_label = "loss";
    for (std::size_t f = 0; f < files.size(); ++f) {
      const CsvTable& t = tables[f];
      const auto lc = t.column("loss_cls"), tc = t.column("loss_transfer");
      if (!lc || !tc) throw SchemaError(files[f] + ": expected metrics columns loss_cls and loss_transfer");
      const std::string stem = fs::path(files[f]).stem().string();
      PlotSeries cls{stem + " cls", {}, {}}, transfer{stem + " transfer", {}, {}};
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        cls.x.push_back(static_cast<double>(r));
        cls.y.push_back(cell_value(t.rows[r][*lc]));
        transfer.x.push_back(static_cast<double>(r));
        transfer.y.push_back(cell_value(t.rows[r][*tc]));
      }
      spec.series.push_back(std::move(cls));
      spec.series.push_back(std::move(transfer));
    }
  }
  const fs::path path = output.empty() ? fs::path(common.out_dir) / "plot.svg" : fs::path(output);
  write_file(path, render_line_chart(spec));
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

/// Rebuilds the argument list as: subcommand, file settings, command-line flags. Later
/// occurrences win, so flags override the file and the file overrides defaults.
std::vector<std::string> merge_config(const std::vector<std::string>& args, std::string& config_path,
                                      std::vector<std::pair<std::string, std::string>>& file_values) {
  std::vector<std::string> rest;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  std::vector<std::string> merged{args.front()};
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw UsageError("--config: cannot open '" + config_path + "'");
    file_values = parse_config(in);
    for (const auto& [k, v] : file_values) merged.push_back("--" + k + "=" + v);
  }
  merged.insert(merged.end(), rest.begin(), rest.end());
  return merged;
}

void print_precedence(std::ostream& out, const CLI::App& sub, const std::string& config_path,
                      const std::vector<std::string>& user_args) {
  out << "# precedence: command-line flags > config file";
  if (!config_path.empty()) out << " (" << config_path << ")";
  out << " > defaults\n";
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty() || opt->count() == 0) continue;
    const std::string name = opt->get_lnames().front();
    const std::string flag = "--" + name;
    const bool from_flag = std::any_of(user_args.begin(), user_args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    const auto results = opt->results();
    out << "#   " << name << " = " << (results.empty() ? std::string("true") : results.back())
        << (from_flag ? "  [flag]" : "  [config]") << '\n';
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty()) throw ParseError("missing key before '='", line_no);
    out.emplace_back(key, value);
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Margin-based adversarial domain generalization toolkit", "madg"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  Common common;
  TrainFlags tf;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Root seed for all random streams")->capture_default_str();
    sub->add_option("--out", common.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--config", common.config, "Flat key = value file; flags override it");
  };

  // gen-data
  std::string kind = "two_moons", domains, shifts, prefix = "domain";
  std::size_t n = 200, classes = 2;
  std::optional<double> label_noise;
  double feature_noise = 0.1;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate synthetic multi-domain datasets");
  add_common(gen);
  gen->add_option("--kind", kind, "two_moons | colored | gaussian_shift")->capture_default_str();
  gen->add_option("--domains", domains, "Per-domain angles (degrees) or color correlations");
  gen->add_option("--shifts", shifts, "gaussian_shift translations as x:y,x:y,...");
  gen->add_option("--n", n, "Samples per domain")->capture_default_str();
  gen->add_option("--label-noise", label_noise, "Label flip probability (colored default 0.25, else 0)");
  gen->add_option("--feature-noise", feature_noise, "Feature noise standard deviation")->capture_default_str();
  gen->add_option("--classes", classes, "Number of classes (gaussian_shift)")->capture_default_str();
  gen->add_option("--prefix", prefix, "Output file prefix")->capture_default_str();

  // train
  std::string metrics_path, checkpoint_path;
  CLI::App* train = app.add_subcommand("train", "Train MADG, ERM or multi-source adaptation");
  add_common(train);
  add_data_flags(train, tf);
  add_train_flags(train, tf);
  train->add_option("--metrics", metrics_path, "Metrics CSV path (default OUT/metrics.csv)");
  train->add_option("--checkpoint", checkpoint_path, "Checkpoint path (default OUT/model.ckpt)");

  // verify-theory
  std::size_t instances = 200, grid = 4;
  bool inject = false;
  std::string theory_report;
  CLI::App* verify = app.add_subcommand("verify-theory", "Run the finite-class theory checks");
  add_common(verify);
  verify->add_option("--instances", instances, "Random instances")->capture_default_str();
  verify->add_option("--grid", grid, "Simplex grid resolution")->capture_default_str();
  verify->add_option("--report", theory_report, "Report CSV path (default OUT/theory_report.csv)");
  verify->add_flag("--inject-violation", inject, "Test hook: corrupt every right-hand side")->group("");

  // bound
  std::string bound_checkpoint, bound_pi, bound_report;
  double delta = 0.05;
  std::optional<double> rho;
  std::size_t sigma_draws = 16, ascent_steps = 50, bins = 32, oracle_samples = 10;
  bool oracle = false;
  CLI::App* bound = app.add_subcommand("bound", "Assemble the generalization bound report");
  add_common(bound);
  add_data_flags(bound, tf);
  bound->add_option("--checkpoint", bound_checkpoint, "Trained checkpoint");
  bound->add_option("--delta", delta, "Confidence parameter in (0, 1)")->capture_default_str();
  bound->add_option("--rho", rho, "Margin rho (default ln 1.5)");
  bound->add_option("--pi", bound_pi, "Source weights (default uniform)");
  bound->add_option("--sigma-draws", sigma_draws, "Sign draws for the complexity estimate")->capture_default_str();
  bound->add_option("--ascent-steps", ascent_steps, "Ascent steps per sign draw")->capture_default_str();
  bound->add_option("--bins", bins, "Histogram bins per axis for divergences")->capture_default_str();
  bound->add_flag("--oracle", oracle, "Use an enumerated finite fixture (seeded by --seed)");
  bound->add_option("--oracle-samples", oracle_samples, "Samples per domain for --oracle")->capture_default_str();
  bound->add_option("--report", bound_report, "Report path (default OUT/bound_report.txt)");

  // ablate
  std::string axis, values, seeds, summary_path;
  CLI::App* ablate = app.add_subcommand("ablate", "Sweep one training setting over values and seeds");
  add_common(ablate);
  add_data_flags(ablate, tf);
  add_train_flags(ablate, tf);
  ablate->add_option("--axis", axis, "rho-hat | pair-scheme | weight-scheme | grl-eta | lr | update-order")->required();
  ablate->add_option("--values", values, "Comma-separated axis values")->required();
  ablate->add_option("--seeds", seeds, "Comma-separated seeds (default: --seed)");
  ablate->add_option("--summary", summary_path, "Summary CSV path (default OUT/ablation_AXIS.csv)");

  // plot
  std::string inputs, plot_out, title;
  CLI::App* plot = app.add_subcommand("plot", "Render metrics or ablation CSVs as SVG");
  add_common(plot);
  plot->add_option("--inputs", inputs, "Comma-separated metrics or summary CSVs")->required();
  plot->add_option("--output", plot_out, "SVG path (default OUT/plot.svg)");
  plot->add_option("--title", title, "Chart title");

  try {
    if (args.empty()) {
      err << app.help();
      return kExitUsage;
    }
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> file_values;
    std::vector<std::string> merged = args;
    if (args.front().rfind("-", 0) != 0) merged = merge_config(args, config_path, file_values);
    if (CLI::App* target = app.get_subcommand_no_throw(args.front())) {
      for (const auto& [k, v] : file_values) {
        if (target->get_option_no_throw("--" + k) == nullptr) {
          throw UsageError("--config: unknown key '" + k + "' for " + args.front());
        }
      }
    }
    std::vector<std::string> reversed(merged.rbegin(), merged.rend());
    app.parse(reversed);

    CLI::App* sub = app.get_subcommands().front();
    std::vector<std::string> user_args(args.begin() + 1, args.end());
    if (!config_path.empty()) print_precedence(out, *sub, config_path, user_args);

    if (sub == gen) return cmd_gen_data(out, common, kind, domains, shifts, n, label_noise, feature_noise, classes, prefix);
    if (sub == train) return cmd_train(out, err, common, tf, metrics_path, checkpoint_path);
    if (sub == verify) return cmd_verify_theory(out, common, instances, grid, inject, theory_report);
    if (sub == bound) {
      return cmd_bound(out, common, tf, bound_checkpoint, delta, rho, bound_pi, sigma_draws, ascent_steps, bins, oracle,
                       oracle_samples, bound_report);
    }
    if (sub == ablate) return cmd_ablate(out, err, common, tf, axis, values, seeds, summary_path);
    if (sub == plot) return cmd_plot(out, common, inputs, plot_out, title);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace madg
