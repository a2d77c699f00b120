#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pidistill/matrix.hpp"
#include "pidistill/rng.hpp"
#include "pidistill/tape.hpp"

namespace pidistill {

enum class HeadVariant { attention, mean_lp, cls_lp };

std::string to_string(HeadVariant v);
HeadVariant parse_head_variant(std::string_view s);

struct HeadOptions {
  double dropout_p = 0.2;
  /// Divide attention logits by sqrt(d).
  bool scale_logits = true;
  /// Layer-normalize every incoming token vector.
  bool normalize_inputs = true;
};

/// Single-head self-attention followed by mean pooling. No Q/K/V biases.
struct AttentionPoolHead {
  Matrix wq, wk, wv;

  static AttentionPoolHead init(std::size_t width, Rng& rng);
  std::size_t width() const { return wq.rows(); }
};

struct LinearLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out

  static LinearLayer init(std::size_t in, std::size_t out, Rng& rng);
};

struct AttentionVars {
  Var wq, wk, wv;
};

/// One token sequence (n x d) through the head: Q = XWq, K = XWk, V = XWv,
/// A = dropout(softmax(QK^T / sqrt(d))), output = mean over rows of AV (1 x d).
Var attention_pool_forward(Tape& t, const AttentionVars& head, Var tokens, const HeadOptions& opts,
                           Rng& rng, bool training);

/// Attention weights alone (eval mode, no dropout); rows sum to one.
Matrix attention_weights(const AttentionPoolHead& head, const Matrix& tokens, const HeadOptions& opts);

/// Image-only classifier f. For mean_lp and cls_lp the attention head is
/// unused and holds empty matrices.
struct StudentClassifier {
  HeadVariant variant = HeadVariant::attention;
  HeadOptions options;
  AttentionPoolHead visual;
  LinearLayer classifier;

  /// Throws ConfigError for cls_lp when the token stream carries no CLS token.
  static StudentClassifier init(std::size_t width, std::size_t classes, HeadVariant variant,
                                const HeadOptions& options, bool has_cls, Rng& rng);

  std::size_t width() const { return classifier.weight.rows(); }
  std::size_t classes() const { return classifier.weight.cols(); }
};

/// Privileged teacher g over image and report tokens. Pooled features are
/// concatenated as [visual | text].
struct TeacherClassifier {
  HeadOptions options;
  AttentionPoolHead visual;
  AttentionPoolHead text;
  LinearLayer classifier;

  static TeacherClassifier init(std::size_t image_width, std::size_t text_width, std::size_t classes,
                                const HeadOptions& options, Rng& rng);

  std::size_t classes() const { return classifier.weight.cols(); }
};

/// Token inputs for one minibatch. `text` is empty for image-only models.
struct BatchTokens {
  std::vector<const Matrix*> image;
  std::vector<const Matrix*> text;
};

/// Either classifier behind one interface: a stable parameter order, and a
/// forward pass producing B x C logits from parameter vars in that order.
class Model {
 public:
  Model(StudentClassifier s) : impl_(std::move(s)) {}
  Model(TeacherClassifier t) : impl_(std::move(t)) {}

  bool is_teacher() const { return std::holds_alternative<TeacherClassifier>(impl_); }
  bool uses_text() const { return is_teacher(); }
  const StudentClassifier& student() const { return std::get<StudentClassifier>(impl_); }
  const TeacherClassifier& teacher() const { return std::get<TeacherClassifier>(impl_); }
  StudentClassifier& student() { return std::get<StudentClassifier>(impl_); }
  TeacherClassifier& teacher() { return std::get<TeacherClassifier>(impl_); }

  std::size_t classes() const;
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  /// Registers parameters on the tape; trainable=false records them as constants.
  std::vector<Var> bind(Tape& t, bool trainable) const;

  /// Dropout draws happen per sample in batch order (visual head, then text
  /// head) and only in training mode.
  Var logits(Tape& t, std::span<const Var> params, const BatchTokens& batch, Rng& rng,
             bool training) const;

  /// Eval-mode logits as a plain B x C matrix.
  Matrix predict_logits(const BatchTokens& batch) const;

 private:
  std::variant<StudentClassifier, TeacherClassifier> impl_;
};

/// Class probabilities of f for one token sequence.
std::vector<double> student_forward(const StudentClassifier& f, const Matrix& image_tokens, Rng& rng,
                                    bool training);
/// Class probabilities of g for one (image, report) pair.
std::vector<double> teacher_forward(const TeacherClassifier& g, const Matrix& image_tokens,
                                    const Matrix* text_tokens, Rng& rng, bool training);

/// Pooled feature of one token sequence under a head variant, before the
/// linear classifier.
Var pool_tokens(Tape& t, HeadVariant variant, const AttentionVars* head, Var tokens,
                const HeadOptions& opts, Rng& rng, bool training);

}  // namespace pidistill
