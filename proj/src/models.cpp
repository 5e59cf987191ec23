#include "madg/models.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "madg/errors.hpp"
#include "madg/rng.hpp"

namespace madg {

namespace {

constexpr const char* kCheckpointMagic = "madg-checkpoint";
constexpr int kCheckpointVersion = 1;

Linear make_linear(std::size_t in, std::size_t out, CounterRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return Linear{Tensor({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

LinearVars bind_linear(Tape& tape, Linear& layer) { return {tape.leaf(layer.weight), tape.leaf(layer.bias)}; }

Var apply(Tape& tape, const LinearVars& layer, Var x) {
  return tape.add_bias(tape.matmul(x, layer.weight), layer.bias);
}

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_double(const std::string& token, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') throw ParseError("bad number '" + token + "'", line);
  return v;
}

std::size_t parse_size(const std::string& token, std::size_t line) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(token.c_str(), &end, 10);
  if (end == token.c_str() || *end != '\0') throw ParseError("bad integer '" + token + "'", line);
  return static_cast<std::size_t>(v);
}

}  // namespace

void MlpConfig::validate() const {
  if (input_dim == 0 || feature_dim == 0) throw ContractError("model dimensions must be positive");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ContractError("hidden dimensions must be positive");
  }
  if (num_classes < 2) throw ContractError("model needs at least two classes");
}

std::vector<Tensor*> MadgModel::parameters() {
  std::vector<Tensor*> out = extractor_parameters();
  for (Tensor* t : head_parameters()) out.push_back(t);
  for (Tensor* t : aux_parameters()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> MadgModel::parameters() const {
  std::vector<const Tensor*> out;
  for (const Linear& l : extractor) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  out.push_back(&head.weight);
  out.push_back(&head.bias);
  for (const Linear& l : aux_heads) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<std::string> MadgModel::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < extractor.size(); ++i) {
    names.push_back("extractor." + std::to_string(i) + ".weight");
    names.push_back("extractor." + std::to_string(i) + ".bias");
  }
  names.push_back("head.weight");
  names.push_back("head.bias");
  for (std::size_t i = 0; i < aux_heads.size(); ++i) {
    names.push_back("aux." + std::to_string(i) + ".weight");
    names.push_back("aux." + std::to_string(i) + ".bias");
  }
  return names;
}

std::vector<Tensor*> MadgModel::extractor_parameters() {
  std::vector<Tensor*> out;
  for (Linear& l : extractor) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<Tensor*> MadgModel::head_parameters() { return {&head.weight, &head.bias}; }

std::vector<Tensor*> MadgModel::aux_parameters() {
  std::vector<Tensor*> out;
  for (Linear& l : aux_heads) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

void MadgModel::zero_grad() {
  for (Tensor* t : parameters()) t->zero_grad();
}

MadgModel init_model(const MlpConfig& config, const PairIndex& pairs) {
  config.validate();
  CounterRng rng(derive_seed(config.init_seed, "init"));
  MadgModel model;
  model.config = config;
  model.pairs = pairs;
  std::size_t in = config.input_dim;
  for (std::size_t h : config.hidden_dims) {
    model.extractor.push_back(make_linear(in, h, rng));
    in = h;
  }
  model.extractor.push_back(make_linear(in, config.feature_dim, rng));
  model.head = make_linear(config.feature_dim, config.num_classes, rng);
  model.aux_heads.assign(pairs.size(), model.head);
  return model;
}

MadgModel init_model(const MlpConfig& config, std::size_t num_sources, PairScheme scheme) {
  return init_model(config, PairIndex::make(num_sources, scheme));
}

ModelVars bind(Tape& tape, MadgModel& model, ModelPart parts) {
  ModelVars vars;
  if (has_part(parts, ModelPart::extractor)) {
    for (Linear& l : model.extractor) vars.extractor.push_back(bind_linear(tape, l));
  }
  if (has_part(parts, ModelPart::head)) vars.head = bind_linear(tape, model.head);
  if (has_part(parts, ModelPart::aux)) {
    for (Linear& l : model.aux_heads) vars.aux.push_back(bind_linear(tape, l));
  }
  return vars;
}

Var forward_features(Tape& tape, const ModelVars& vars, Var batch) {
  if (vars.extractor.empty()) throw ContractError("extractor parameters are not bound on this tape");
  const Tensor& first_w = tape.value(vars.extractor.front().weight);
  if (tape.value(batch).rank() != 2 || tape.value(batch).cols() != first_w.rows()) {
    throw DimensionError("batch " + shape_string(tape.value(batch).shape()) + " does not match input width " +
                         std::to_string(first_w.rows()));
  }
  Var h = batch;
  for (const LinearVars& layer : vars.extractor) h = tape.relu(apply(tape, layer, h));
  return h;
}

Var forward_head(Tape& tape, const LinearVars& head, Var features) { return apply(tape, head, features); }

MainOutputs forward_main(Tape& tape, const ModelVars& vars, Var batch) {
  if (!vars.head) throw ContractError("main head is not bound on this tape");
  const Var features = forward_features(tape, vars, batch);
  return {features, forward_head(tape, *vars.head, features)};
}

Var forward_aux_head(Tape& tape, const ModelVars& vars, Var features, std::size_t l) {
  if (l >= vars.aux.size()) {
    throw IndexError("auxiliary head " + std::to_string(l) + " out of range (j = " + std::to_string(vars.aux.size()) + ")");
  }
  return apply(tape, vars.aux[l], features);
}

Var forward_aux(Tape& tape, const ModelVars& vars, Var features, std::size_t l, double eta) {
  if (l >= vars.aux.size()) {
    throw IndexError("auxiliary head " + std::to_string(l) + " out of range (j = " + std::to_string(vars.aux.size()) + ")");
  }
  return apply(tape, vars.aux[l], tape.grl(features, eta));
}

Tensor apply_linear(const Linear& layer, const Tensor& input) {
  const std::size_t n = input.rows(), m = input.cols(), p = layer.weight.cols();
  if (m != layer.weight.rows()) {
    throw DimensionError("input " + shape_string(input.shape()) + " does not match layer " +
                         shape_string(layer.weight.shape()));
  }
  std::vector<double> out(n * p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      const double xik = input[i * m + k];
      for (std::size_t j = 0; j < p; ++j) out[i * p + j] += xik * layer.weight[k * p + j];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += layer.bias[i % p];
  return Tensor({n, p}, std::move(out));
}

Tensor extract_features(const MadgModel& model, const Tensor& batch) {
  Tensor h = batch;
  for (const Linear& layer : model.extractor) {
    h = apply_linear(layer, h);
    for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
  }
  return h;
}

Tensor predict_scores(const MadgModel& model, const Tensor& batch) {
  return apply_linear(model.head, extract_features(model, batch));
}

void save_checkpoint(const MadgModel& model, std::ostream& out) {
  const MlpConfig& c = model.config;
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "input_dim " << c.input_dim << '\n';
  out << "hidden_dims " << c.hidden_dims.size();
  for (std::size_t h : c.hidden_dims) out << ' ' << h;
  out << '\n';
  out << "feature_dim " << c.feature_dim << '\n';
  out << "num_classes " << c.num_classes << '\n';
  out << "init_seed " << c.init_seed << '\n';
  out << "num_domains " << model.pairs.num_domains << '\n';
  out << "pairs " << model.pairs.size();
  for (const auto& [i, k] : model.pairs.pairs) out << ' ' << i << ' ' << k;
  out << '\n';
  const auto params = model.parameters();
  const auto names = model.parameter_names();
  for (std::size_t p = 0; p < params.size(); ++p) {
    out << "param " << names[p] << ' ' << params[p]->shape().size();
    for (std::size_t d : params[p]->shape()) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      out << (i ? " " : "") << hex((*params[p])[i]);
    }
    out << '\n';
  }
  out << "end\n";
}

MadgModel load_checkpoint(std::istream& in) {
  std::size_t line_no = 0;
  auto next_line = [&](const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("unexpected end of checkpoint, expected '" + key + "'", line_no + 1);
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word != key) throw ParseError("expected '" + key + "', found '" + word + "'", line_no);
    std::vector<std::string> rest;
    while (ss >> word) rest.push_back(word);
    return rest;
  };
  auto one = [&](const std::string& key) {
    auto t = next_line(key);
    if (t.size() != 1) throw ParseError("expected one value for '" + key + "'", line_no);
    return parse_size(t[0], line_no);
  };

  auto header = next_line(kCheckpointMagic);
  if (header.size() != 1 || parse_size(header[0], line_no) != kCheckpointVersion) {
    throw SchemaError("unsupported checkpoint version");
  }
  MlpConfig config;
  config.input_dim = one("input_dim");
  auto hidden = next_line("hidden_dims");
  if (hidden.empty() || parse_size(hidden[0], line_no) + 1 != hidden.size()) {
    throw ParseError("malformed hidden_dims", line_no);
  }
  config.hidden_dims.clear();
  for (std::size_t i = 1; i < hidden.size(); ++i) config.hidden_dims.push_back(parse_size(hidden[i], line_no));
  config.feature_dim = one("feature_dim");
  config.num_classes = one("num_classes");
  config.init_seed = one("init_seed");
  PairIndex pairs;
  pairs.num_domains = one("num_domains");
  auto p = next_line("pairs");
  if (p.empty() || 2 * parse_size(p[0], line_no) + 1 != p.size()) throw ParseError("malformed pairs", line_no);
  for (std::size_t i = 1; i < p.size(); i += 2) {
    pairs.pairs.emplace_back(parse_size(p[i], line_no), parse_size(p[i + 1], line_no));
  }

  MadgModel model = init_model(config, pairs);
  const auto names = model.parameter_names();
  auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto decl = next_line("param");
    if (decl.size() < 2 || decl[0] != names[k]) throw SchemaError("checkpoint parameter order mismatch at " + names[k]);
    Shape shape;
    const std::size_t rank = parse_size(decl[1], line_no);
    if (decl.size() != rank + 2) throw ParseError("malformed parameter shape", line_no);
    for (std::size_t d = 0; d < rank; ++d) shape.push_back(parse_size(decl[2 + d], line_no));
    if (shape != params[k]->shape()) throw SchemaError("checkpoint shape mismatch for " + names[k]);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing values for " + names[k], line_no + 1);
    ++line_no;
    std::istringstream ss(line);
    std::string token;
    std::size_t i = 0;
    while (ss >> token) {
      if (i >= params[k]->size()) throw ParseError("too many values for " + names[k], line_no);
      (*params[k])[i++] = parse_double(token, line_no);
    }
    if (i != params[k]->size()) throw ParseError("too few values for " + names[k], line_no);
  }
  next_line("end");
  return model;
}

void save_checkpoint(const MadgModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_checkpoint(model, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

MadgModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace madg
