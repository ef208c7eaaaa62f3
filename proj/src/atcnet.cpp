#include "mipilot/atcnet.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace mipilot::atcnet {

using tensor::Shape;

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::mean_prob: return "mean-prob";
    case Fusion::mean_logit: return "mean-logit";
    case Fusion::concat_dense: return "concat-dense";
  }
  return "?";
}

Fusion fusion_from_string(const std::string& s) {
  if (s == "mean-prob") return Fusion::mean_prob;
  if (s == "mean-logit") return Fusion::mean_logit;
  if (s == "concat-dense") return Fusion::concat_dense;
  throw ArgumentError("unknown fusion rule '" + s + "'");
}

void AtcNetConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ArgumentError("model config: " + what);
  };
  check(channels >= 1 && samples >= 1, "input shape must be positive");
  check(cv.F1 >= 1 && cv.D >= 1 && cv.K_C >= 1 && cv.separable_kernel >= 1, "CV sizes must be positive");
  check(cv.P1 >= 1 && cv.P2 >= 1, "pool lengths must be positive");
  check(samples / cv.P1 >= cv.P2, "input too short for the pooling stages");
  check(n_windows >= 1 && n_windows <= Tc(),
        "window count " + std::to_string(n_windows) + " exceeds sequence length " +
            std::to_string(Tc()));
  check(at.heads >= 1 && at.key_dim >= 1, "attention sizes must be positive");
  check(tc.L >= 1 && tc.K_T >= 1 && tc.filters >= 1, "TC sizes must be positive");
  check(n_classes >= 2, "need at least two classes");
  for (double r : {cv.dropout, at.dropout, tc.dropout}) check(r >= 0 && r < 1, "dropout in [0, 1)");
  check(bn_momentum >= 0 && bn_momentum < 1 && bn_eps > 0, "invalid batch-norm settings");
}

std::string AtcNetConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "channels = " << channels << "\n"
     << "samples = " << samples << "\n"
     << "cv.F1 = " << cv.F1 << "\n"
     << "cv.K_C = " << cv.K_C << "\n"
     << "cv.D = " << cv.D << "\n"
     << "cv.P1 = " << cv.P1 << "\n"
     << "cv.P2 = " << cv.P2 << "\n"
     << "cv.separable_kernel = " << cv.separable_kernel << "\n"
     << "cv.dropout = " << cv.dropout << "\n"
     << "at.heads = " << at.heads << "\n"
     << "at.key_dim = " << at.key_dim << "\n"
     << "at.dropout = " << at.dropout << "\n"
     << "at.use_layer_norm = " << (at.use_layer_norm ? 1 : 0) << "\n"
     << "tc.L = " << tc.L << "\n"
     << "tc.K_T = " << tc.K_T << "\n"
     << "tc.filters = " << tc.filters << "\n"
     << "tc.dropout = " << tc.dropout << "\n"
     << "n_windows = " << n_windows << "\n"
     << "n_classes = " << n_classes << "\n"
     << "fusion = " << to_string(fusion) << "\n"
     << "bn_momentum = " << bn_momentum << "\n"
     << "bn_eps = " << bn_eps << "\n"
     << "init_seed = " << init_seed << "\n";
  return os.str();
}

AtcNetConfig AtcNetConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  AtcNetConfig c;
  auto get_int = [&](const char* key, int& dst) {
    if (auto it = kv.find(key); it != kv.end()) dst = std::stoi(it->second);
  };
  auto get_double = [&](const char* key, double& dst) {
    if (auto it = kv.find(key); it != kv.end()) dst = std::stod(it->second);
  };
  get_int("channels", c.channels);
  get_int("samples", c.samples);
  get_int("cv.F1", c.cv.F1);
  get_int("cv.K_C", c.cv.K_C);
  get_int("cv.D", c.cv.D);
  get_int("cv.P1", c.cv.P1);
  get_int("cv.P2", c.cv.P2);
  get_int("cv.separable_kernel", c.cv.separable_kernel);
  get_double("cv.dropout", c.cv.dropout);
  get_int("at.heads", c.at.heads);
  get_int("at.key_dim", c.at.key_dim);
  get_double("at.dropout", c.at.dropout);
  int ln = c.at.use_layer_norm ? 1 : 0;
  get_int("at.use_layer_norm", ln);
  c.at.use_layer_norm = ln != 0;
  get_int("tc.L", c.tc.L);
  get_int("tc.K_T", c.tc.K_T);
  get_int("tc.filters", c.tc.filters);
  get_double("tc.dropout", c.tc.dropout);
  get_int("n_windows", c.n_windows);
  get_int("n_classes", c.n_classes);
  if (auto it = kv.find("fusion"); it != kv.end()) c.fusion = fusion_from_string(it->second);
  get_double("bn_momentum", c.bn_momentum);
  get_double("bn_eps", c.bn_eps);
  if (auto it = kv.find("init_seed"); it != kv.end()) c.init_seed = std::stoull(it->second);
  c.validate();
  return c;
}

AtcNetConfig AtcNetConfig::paper() { return AtcNetConfig{}; }

AtcNetConfig AtcNetConfig::desk() {
  AtcNetConfig c;
  c.samples = 500;
  c.cv.K_C = 76;
  c.cv.P1 = 4;
  c.cv.P2 = 5;
  c.n_windows = 7;
  return c;
}

int receptive_field(const TcConfig& tc) { return 1 + 2 * (tc.K_T - 1) * (2 * tc.L - 1); }

bool is_finetune_parameter(const std::string& name) {
  return name.starts_with("cv.") || name.starts_with("head.dense.");
}

namespace {

template <Real S>
Tensor<S> glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor<S> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<S>(u(rng));
  return t;
}

}  // namespace

template <Real S>
AtcNet<S>::AtcNet(AtcNetConfig config) : config_(config) {
  config_.validate();
  Rng rng(config_.init_seed);
  const auto C = static_cast<std::size_t>(config_.channels);
  const auto F1 = static_cast<std::size_t>(config_.cv.F1);
  const auto F2 = static_cast<std::size_t>(config_.cv.F2());
  const auto KC = static_cast<std::size_t>(config_.cv.K_C);
  const auto KS = static_cast<std::size_t>(config_.cv.separable_kernel);
  const auto d = F2;
  const auto hk = static_cast<std::size_t>(config_.at.heads * config_.at.key_dim);
  const auto F = static_cast<std::size_t>(config_.tc.filters);
  const auto KT = static_cast<std::size_t>(config_.tc.K_T);
  const auto ncls = static_cast<std::size_t>(config_.n_classes);

  auto add_bn = [&](const std::string& prefix, std::size_t ch) {
    params_.add(prefix + ".gamma", Tensor<S>({ch}, S(1)));
    params_.add(prefix + ".beta", Tensor<S>({ch}, S(0)));
    params_.add(prefix + ".running_mean", Tensor<S>({ch}, S(0)), true);
    params_.add(prefix + ".running_var", Tensor<S>({ch}, S(1)), true);
  };

  params_.add("cv.conv1.weight", glorot<S>({F1, 1, 1, KC}, KC, F1 * KC, rng));
  add_bn("cv.bn1", F1);
  params_.add("cv.depthwise.weight", glorot<S>({F2, 1, C, 1}, C, config_.cv.D * C, rng));
  add_bn("cv.bn2", F2);
  params_.add("cv.conv2.weight", glorot<S>({F2, F2, 1, KS}, F2 * KS, F2 * KS, rng));
  add_bn("cv.bn3", F2);

  if (config_.at.use_layer_norm) {
    params_.add("at.norm.gamma", Tensor<S>({d}, S(1)));
    params_.add("at.norm.beta", Tensor<S>({d}, S(0)));
  }
  for (const char* proj : {"query", "key", "value"}) {
    params_.add(std::string("at.") + proj + ".weight", glorot<S>({d, hk}, d, hk, rng));
    params_.add(std::string("at.") + proj + ".bias", Tensor<S>({hk}, S(0)));
  }
  params_.add("at.output.weight", glorot<S>({hk, d}, hk, d, rng));
  params_.add("at.output.bias", Tensor<S>({d}, S(0)));

  std::size_t in = d;
  for (int i = 0; i < config_.tc.L; ++i) {
    const std::string p = "tc.block" + std::to_string(i);
    params_.add(p + ".conv1.weight", glorot<S>({F, in, KT}, in * KT, F * KT, rng));
    params_.add(p + ".conv1.bias", Tensor<S>({F}, S(0)));
    add_bn(p + ".bn1", F);
    params_.add(p + ".conv2.weight", glorot<S>({F, F, KT}, F * KT, F * KT, rng));
    params_.add(p + ".conv2.bias", Tensor<S>({F}, S(0)));
    add_bn(p + ".bn2", F);
    if (in != F) {
      params_.add(p + ".residual.weight", glorot<S>({F, in, 1}, in, F, rng));
      params_.add(p + ".residual.bias", Tensor<S>({F}, S(0)));
    }
    in = F;
  }

  const std::size_t head_in =
      config_.fusion == Fusion::concat_dense ? F * static_cast<std::size_t>(config_.n_windows) : F;
  params_.add("head.dense.weight", glorot<S>({head_in, ncls}, head_in, ncls, rng));
  params_.add("head.dense.bias", Tensor<S>({ncls}, S(0)));
}

template <Real S>
Var<S> AtcNet<S>::param(const ForwardContext<S>& ctx, const std::string& name) {
  return ctx.tape.parameter(params_.get(name));
}

template <Real S>
Var<S> AtcNet<S>::batch_norm(const ForwardContext<S>& ctx, Var<S> x, const std::string& prefix) {
  auto& gamma = params_.get(prefix + ".gamma");
  auto& mean = params_.get(prefix + ".running_mean");
  auto& var = params_.get(prefix + ".running_var");
  // A frozen normalization layer runs on its running statistics and leaves them untouched.
  const Mode mode = gamma.trainable ? ctx.mode : Mode::eval;
  return tensor::batch_norm(x, param(ctx, prefix + ".gamma"), param(ctx, prefix + ".beta"),
                            mean.value, var.value, mode, static_cast<S>(config_.bn_momentum),
                            static_cast<S>(config_.bn_eps), true);
}

template <Real S>
Var<S> AtcNet<S>::cv_block_forward(const ForwardContext<S>& ctx, Var<S> input) {
  const Shape xs = input.shape();
  const auto C = static_cast<std::size_t>(config_.channels);
  const auto T = static_cast<std::size_t>(config_.samples);
  if (xs.size() != 4 || xs[1] != 1 || xs[2] != C || xs[3] != T)
    throw ShapeError("CV block expects [B,1," + std::to_string(C) + "," + std::to_string(T) +
                     "], got " + tensor::to_string(xs));
  const auto& cv = config_.cv;
  const S drop = static_cast<S>(cv.dropout);
  auto x = tensor::conv2d(input, param(ctx, "cv.conv1.weight"), std::optional<Var<S>>{},
                          tensor::Padding::same);                                  // [B,F1,C,T]
  x = batch_norm(ctx, x, "cv.bn1");
  x = tensor::conv2d(x, param(ctx, "cv.depthwise.weight"), std::optional<Var<S>>{}, tensor::Padding::valid,
                     static_cast<std::size_t>(cv.F1));                             // [B,F2,1,T]
  x = batch_norm(ctx, x, "cv.bn2");
  x = tensor::elu(x);
  x = tensor::avg_pool(x, static_cast<std::size_t>(cv.P1));
  x = tensor::dropout(x, drop, ctx.rng, ctx.mode);
  x = tensor::conv2d(x, param(ctx, "cv.conv2.weight"), std::optional<Var<S>>{}, tensor::Padding::same);
  x = batch_norm(ctx, x, "cv.bn3");
  x = tensor::elu(x);
  x = tensor::avg_pool(x, static_cast<std::size_t>(cv.P2));
  x = tensor::dropout(x, drop, ctx.rng, ctx.mode);                                // [B,F2,1,Tc]
  const std::size_t B = xs[0], F2 = static_cast<std::size_t>(cv.F2());
  const std::size_t Tc = x.shape()[3];
  return tensor::permute(tensor::reshape(x, {B, F2, Tc}), {0, 2, 1});              // [B,Tc,F2]
}

template <Real S>
std::vector<Var<S>> split_windows(Var<S> sequence, int n) {
  const Shape s = sequence.shape();
  if (s.size() != 3) throw ShapeError("split_windows expects [B, Tc, d]");
  if (n < 1 || static_cast<std::size_t>(n) > s[1])
    throw ShapeError("cannot cut " + std::to_string(n) + " windows from a sequence of length " +
                     std::to_string(s[1]));
  const std::size_t Tw = s[1] - static_cast<std::size_t>(n) + 1;
  std::vector<Var<S>> out;
  for (int w = 0; w < n; ++w) out.push_back(tensor::slice(sequence, 1, static_cast<std::size_t>(w), Tw));
  return out;
}

template <Real S>
Var<S> AtcNet<S>::window_features(const ForwardContext<S>& ctx, Var<S> window) {
  const Shape ws = window.shape();
  const auto d = static_cast<std::size_t>(config_.d());
  if (ws.size() != 3 || ws[2] != d)
    throw ShapeError("window head expects [N, Tw, " + std::to_string(d) + "], got " +
                     tensor::to_string(ws));
  const std::size_t N = ws[0], Tw = ws[1];

  // Attention block with residual connection.
  auto h = window;
  if (config_.at.use_layer_norm)
    h = tensor::layer_norm(h, param(ctx, "at.norm.gamma"), param(ctx, "at.norm.beta"),
                           static_cast<S>(1e-6));
  tensor::AttentionWeights<S> aw{param(ctx, "at.query.weight"),  param(ctx, "at.query.bias"),
                                 param(ctx, "at.key.weight"),    param(ctx, "at.key.bias"),
                                 param(ctx, "at.value.weight"),  param(ctx, "at.value.bias"),
                                 param(ctx, "at.output.weight"), param(ctx, "at.output.bias")};
  auto att = tensor::multi_head_self_attention(
      h, aw,
      {static_cast<std::size_t>(config_.at.heads), static_cast<std::size_t>(config_.at.key_dim)},
      static_cast<S>(config_.at.dropout), ctx.rng, ctx.mode);
  auto x = tensor::permute(tensor::add(window, att.output), {0, 2, 1});  // [N, d, Tw]

  // Temporal convolution block: residual units with dilations 1, 2, 4, ...
  const S drop = static_cast<S>(config_.tc.dropout);
  for (int i = 0; i < config_.tc.L; ++i) {
    const std::string p = "tc.block" + std::to_string(i);
    const std::size_t dil = std::size_t{1} << i;
    auto y = tensor::causal_dilated_conv1d(x, param(ctx, p + ".conv1.weight"),
                                           std::optional(param(ctx, p + ".conv1.bias")), dil);
    y = tensor::dropout(tensor::elu(batch_norm(ctx, y, p + ".bn1")), drop, ctx.rng, ctx.mode);
    y = tensor::causal_dilated_conv1d(y, param(ctx, p + ".conv2.weight"),
                                      std::optional(param(ctx, p + ".conv2.bias")), dil);
    y = tensor::dropout(tensor::elu(batch_norm(ctx, y, p + ".bn2")), drop, ctx.rng, ctx.mode);
    auto residual = x;
    if (params_.find(p + ".residual.weight"))
      residual = tensor::causal_dilated_conv1d(x, param(ctx, p + ".residual.weight"),
                                               std::optional(param(ctx, p + ".residual.bias")), 1);
    x = tensor::elu(tensor::add(y, residual));
  }
  const auto F = static_cast<std::size_t>(config_.tc.filters);
  return tensor::reshape(tensor::slice(x, 2, Tw - 1, 1), {N, F});
}

template <Real S>
Var<S> AtcNet<S>::window_head_forward(const ForwardContext<S>& ctx, Var<S> window) {
  if (config_.fusion == Fusion::concat_dense)
    throw StateError("per-window logits are undefined for concat-dense fusion");
  return tensor::dense(window_features(ctx, window), param(ctx, "head.dense.weight"),
                       std::optional(param(ctx, "head.dense.bias")));
}

template <Real S>
ModelOutput<S> AtcNet<S>::forward(const ForwardContext<S>& ctx, Var<S> input) {
  auto seq = cv_block_forward(ctx, input);
  const std::size_t B = seq.shape()[0];
  const auto n = static_cast<std::size_t>(config_.n_windows);
  const auto ncls = static_cast<std::size_t>(config_.n_classes);
  // All windows share one head, so they are stacked along the batch axis (window-major).
  auto stacked = tensor::concat0(split_windows(seq, config_.n_windows));
  switch (config_.fusion) {
    case Fusion::mean_prob: {
      auto probs = tensor::softmax(window_head_forward(ctx, stacked));
      return {tensor::mean0(tensor::reshape(probs, {n, B, ncls})), std::nullopt};
    }
    case Fusion::mean_logit: {
      auto logits = tensor::mean0(tensor::reshape(window_head_forward(ctx, stacked), {n, B, ncls}));
      return {tensor::softmax(logits), logits};
    }
    case Fusion::concat_dense: {
      auto feats = window_features(ctx, stacked);
      const std::size_t F = feats.shape()[1];
      auto joined = tensor::reshape(tensor::permute(tensor::reshape(feats, {n, B, F}), {1, 0, 2}),
                                    {B, n * F});
      auto logits = tensor::dense(joined, param(ctx, "head.dense.weight"),
                                  std::optional(param(ctx, "head.dense.bias")));
      return {tensor::softmax(logits), logits};
    }
  }
  throw StateError("unknown fusion rule");
}

template <Real S>
Tensor<S> AtcNet<S>::predict(const Tensor<S>& input) {
  tensor::Tape<S> tape;
  Rng rng(0);
  ForwardContext<S> ctx{tape, Mode::eval, rng};
  return forward(ctx, tape.constant(input)).probabilities.value();
}

template <Real S>
void AtcNet<S>::freeze_for_finetune() {
  for (auto& p : params_)
    if (!p->is_state) p->trainable = is_finetune_parameter(p->name);
}

template <Real S>
void AtcNet<S>::unfreeze_all() {
  for (auto& p : params_)
    if (!p->is_state) p->trainable = true;
}

template <Real S>
bool AtcNet<S>::is_frozen_for_finetune() const {
  for (const auto& p : params_)
    if (!p->is_state && p->trainable != is_finetune_parameter(p->name)) return false;
  return true;
}

template <Real S>
tensor::Checkpoint AtcNet<S>::to_checkpoint() const {
  return tensor::snapshot(params_, config_.to_text());
}

template <Real S>
AtcNet<S> AtcNet<S>::from_checkpoint(const tensor::Checkpoint& ckpt) {
  AtcNet<S> model(AtcNetConfig::from_text(ckpt.config_text));
  tensor::restore(model.params_, ckpt);
  return model;
}

template <Real S>
std::size_t count_parameters(const AtcNet<S>& model) {
  std::size_t n = 0;
  for (const auto& p : model.params())
    if (!p->is_state) n += p->value.size();
  return n;
}

template class AtcNet<float>;
template class AtcNet<double>;
template std::vector<Var<float>> split_windows<float>(Var<float>, int);
template std::vector<Var<double>> split_windows<double>(Var<double>, int);
template std::size_t count_parameters<float>(const AtcNet<float>&);
template std::size_t count_parameters<double>(const AtcNet<double>&);

}  // namespace mipilot::atcnet
