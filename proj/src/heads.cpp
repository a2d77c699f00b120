#include "pidistill/heads.hpp"

#include <cmath>

#include "pidistill/error.hpp"
#include "pidistill/kernels.hpp"

namespace pidistill {

std::string to_string(HeadVariant v) {
  switch (v) {
    case HeadVariant::attention: return "attention";
    case HeadVariant::mean_lp: return "mean_lp";
    case HeadVariant::cls_lp: return "cls_lp";
  }
  return "unknown";
}

HeadVariant parse_head_variant(std::string_view s) {
  if (s == "attention") return HeadVariant::attention;
  if (s == "mean_lp") return HeadVariant::mean_lp;
  if (s == "cls_lp") return HeadVariant::cls_lp;
  throw ConfigError("unknown head variant '" + std::string(s) + "'");
}

namespace {

Matrix uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return m;
}

}  // namespace

AttentionPoolHead AttentionPoolHead::init(std::size_t width, Rng& rng) {
  if (width == 0) throw ConfigError("attention head width must be positive");
  AttentionPoolHead h;
  h.wq = uniform_init(width, width, rng);
  h.wk = uniform_init(width, width, rng);
  h.wv = uniform_init(width, width, rng);
  return h;
}

LinearLayer LinearLayer::init(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ConfigError("linear layer dimensions must be positive");
  return LinearLayer{uniform_init(in, out, rng), Matrix(1, out)};
}

Var attention_pool_forward(Tape& t, const AttentionVars& head, Var tokens, const HeadOptions& opts,
                           Rng& rng, bool training) {
  const Matrix& x = t.value(tokens);
  const std::size_t d = t.value(head.wq).rows();
  if (x.cols() != d) {
    throw DataError("token width " + std::to_string(x.cols()) + " does not match head width " +
                    std::to_string(d));
  }
  if (x.rows() == 0) throw DataError("attention pooling needs at least one token");
  const Var q = matmul(t, tokens, head.wq);
  const Var k = matmul(t, tokens, head.wk);
  const Var v = matmul(t, tokens, head.wv);
  Var scores = matmul_nt(t, q, k);
  if (opts.scale_logits) scores = scale(t, scores, 1.0 / std::sqrt(static_cast<double>(d)));
  Var weights = softmax_rows(t, scores, 1.0);
  weights = dropout(t, weights, opts.dropout_p, rng, training);
  return mean_pool_rows(t, matmul(t, weights, v));
}

Matrix attention_weights(const AttentionPoolHead& head, const Matrix& tokens, const HeadOptions& opts) {
  const Matrix q = kernels::matmul(tokens, head.wq);
  const Matrix k = kernels::matmul(tokens, head.wk);
  Matrix scores = kernels::matmul_nt(q, k);
  if (opts.scale_logits) {
    const double s = 1.0 / std::sqrt(static_cast<double>(head.width()));
    for (double& v : scores.values()) v *= s;
  }
  return kernels::softmax_rows(scores, 1.0);
}

Var pool_tokens(Tape& t, HeadVariant variant, const AttentionVars* head, Var tokens,
                const HeadOptions& opts, Rng& rng, bool training) {
  switch (variant) {
    case HeadVariant::attention:
      return attention_pool_forward(t, *head, tokens, opts, rng, training);
    case HeadVariant::mean_lp:
      return mean_pool_rows(t, tokens);
    case HeadVariant::cls_lp:
      return select_row(t, tokens, 0);
  }
  throw ConfigError("unknown head variant");
}

StudentClassifier StudentClassifier::init(std::size_t width, std::size_t classes, HeadVariant variant,
                                          const HeadOptions& options, bool has_cls, Rng& rng) {
  if (variant == HeadVariant::cls_lp && !has_cls) {
    throw ConfigError("cls_lp head requires token sequences with a leading CLS token");
  }
  if (classes < 2) throw ConfigError("a classifier needs at least two classes");
  StudentClassifier s;
  s.variant = variant;
  s.options = options;
  if (variant == HeadVariant::attention) s.visual = AttentionPoolHead::init(width, rng);
  s.classifier = LinearLayer::init(width, classes, rng);
  return s;
}

TeacherClassifier TeacherClassifier::init(std::size_t image_width, std::size_t text_width,
                                          std::size_t classes, const HeadOptions& options, Rng& rng) {
  if (classes < 2) throw ConfigError("a classifier needs at least two classes");
  if (text_width == 0) throw DataError("teacher requires report tokens (text width is 0)");
  TeacherClassifier g;
  g.options = options;
  g.visual = AttentionPoolHead::init(image_width, rng);
  g.text = AttentionPoolHead::init(text_width, rng);
  g.classifier = LinearLayer::init(image_width + text_width, classes, rng);
  return g;
}

std::size_t Model::classes() const {
  return is_teacher() ? teacher().classes() : student().classes();
}

std::vector<Matrix*> Model::parameters() {
  if (is_teacher()) {
    auto& g = teacher();
    return {&g.visual.wq, &g.visual.wk, &g.visual.wv, &g.text.wq, &g.text.wk, &g.text.wv,
            &g.classifier.weight, &g.classifier.bias};
  }
  auto& f = student();
  if (f.variant == HeadVariant::attention) {
    return {&f.visual.wq, &f.visual.wk, &f.visual.wv, &f.classifier.weight, &f.classifier.bias};
  }
  return {&f.classifier.weight, &f.classifier.bias};
}

std::vector<const Matrix*> Model::parameters() const {
  auto mutable_params = const_cast<Model*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::vector<std::string> Model::parameter_names() const {
  if (is_teacher()) {
    return {"visual.wq", "visual.wk", "visual.wv", "text.wq", "text.wk", "text.wv",
            "classifier.weight", "classifier.bias"};
  }
  if (student().variant == HeadVariant::attention) {
    return {"visual.wq", "visual.wk", "visual.wv", "classifier.weight", "classifier.bias"};
  }
  return {"classifier.weight", "classifier.bias"};
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : parameters()) n += m->size();
  return n;
}

std::vector<Var> Model::bind(Tape& t, bool trainable) const {
  std::vector<Var> vars;
  for (const Matrix* m : parameters()) vars.push_back(trainable ? t.parameter(*m) : t.constant(*m));
  return vars;
}

namespace {

Var input_tokens(Tape& t, const Matrix& tokens, const HeadOptions& opts) {
  const Var raw = t.constant(tokens);
  return opts.normalize_inputs ? layer_norm_rows(t, raw) : raw;
}

Var linear(Tape& t, Var features, Var weight, Var bias) {
  return add_row_bias(t, matmul(t, features, weight), bias);
}

}  // namespace

Var Model::logits(Tape& t, std::span<const Var> params, const BatchTokens& batch, Rng& rng,
                  bool training) const {
  if (batch.image.empty()) throw DataError("empty batch");
  std::vector<Var> pooled;
  pooled.reserve(batch.image.size());
  if (is_teacher()) {
    const auto& g = teacher();
    if (batch.text.size() != batch.image.size()) {
      throw DataError("teacher requires report tokens for every sample");
    }
    const AttentionVars vis{params[0], params[1], params[2]};
    const AttentionVars txt{params[3], params[4], params[5]};
    for (std::size_t i = 0; i < batch.image.size(); ++i) {
      if (batch.text[i] == nullptr || batch.text[i]->rows() == 0) {
        throw DataError("teacher requires report tokens; sample " + std::to_string(i) + " has none");
      }
      const Var xv = input_tokens(t, *batch.image[i], g.options);
      const Var zv = input_tokens(t, *batch.text[i], g.options);
      const Var pv = layer_norm_rows(t, attention_pool_forward(t, vis, xv, g.options, rng, training));
      const Var pt = layer_norm_rows(t, attention_pool_forward(t, txt, zv, g.options, rng, training));
      pooled.push_back(concat_cols(t, pv, pt));
    }
    return linear(t, stack_rows(t, pooled), params[6], params[7]);
  }
  const auto& f = student();
  const bool attn = f.variant == HeadVariant::attention;
  const AttentionVars vis = attn ? AttentionVars{params[0], params[1], params[2]} : AttentionVars{};
  for (const Matrix* x : batch.image) {
    const Var xv = input_tokens(t, *x, f.options);
    pooled.push_back(pool_tokens(t, f.variant, attn ? &vis : nullptr, xv, f.options, rng, training));
  }
  const std::size_t w = attn ? 3 : 0;
  return linear(t, stack_rows(t, pooled), params[w], params[w + 1]);
}

Matrix Model::predict_logits(const BatchTokens& batch) const {
  Tape t;
  const auto params = bind(t, false);
  Rng unused;
  return t.value(logits(t, params, batch, unused, false));
}

std::vector<double> student_forward(const StudentClassifier& f, const Matrix& image_tokens, Rng& rng,
                                    bool training) {
  const Model m(f);
  Tape t;
  const auto params = m.bind(t, false);
  const Var lg = m.logits(t, params, BatchTokens{{&image_tokens}, {}}, rng, training);
  const Matrix p = kernels::softmax_rows(t.value(lg), 1.0);
  return {p.values().begin(), p.values().end()};
}

std::vector<double> teacher_forward(const TeacherClassifier& g, const Matrix& image_tokens,
                                    const Matrix* text_tokens, Rng& rng, bool training) {
  if (text_tokens == nullptr) throw DataError("teacher requires report tokens");
  const Model m(g);
  Tape t;
  const auto params = m.bind(t, false);
  const Var lg = m.logits(t, params, BatchTokens{{&image_tokens}, {text_tokens}}, rng, training);
  const Matrix p = kernels::softmax_rows(t.value(lg), 1.0);
  return {p.values().begin(), p.values().end()};
}

}  // namespace pidistill
