#include "malite/net.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace malite {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(' << s.n << ',' << s.h << ',' << s.w << ',' << s.c << ')';
  return os.str();
}

void BottleneckSpec::validate() const {
  if (x <= 0 || x_out <= 0) fail(ErrorKind::InvalidConfig, "bottleneck channels must be positive");
  if (stride != 1 && stride != 2) fail(ErrorKind::InvalidConfig, "bottleneck stride must be 1 or 2");
  if (t < 1) fail(ErrorKind::InvalidConfig, "expansion factor must be >= 1");
  if (k < 1 || k % 2 == 0) fail(ErrorKind::InvalidConfig, "kernel size must be odd and positive");
}

void NetConfig::validate() const {
  auto bad = [](const std::string& why) { fail(ErrorKind::InvalidConfig, why); };
  if (input_channels != 1 && input_channels != 3) bad("input_channels must be 1 (gray) or 3 (RGB)");
  if (stem_channels <= 0 || head_channels <= 0) bad("channel counts must be positive");
  if (stem_stride != 1 && stem_stride != 2) bad("stem stride must be 1 or 2");
  if (classes < 1) bad("classes must be >= 1");
  if (static_cast<int>(blocks.size()) != kBlocks) bad("exactly 8 bottleneck blocks are required");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.out_channels <= 0) bad("block channels must be positive");
    if (b.stride != 1 && b.stride != 2) bad("block stride must be 1 or 2");
    if (i > 0 && b.expansion != 6) bad("blocks after the first use expansion factor 6");
    if (b.expansion < 1) bad("expansion factor must be >= 1");
  }
}

std::vector<BottleneckSpec> NetConfig::bottlenecks() const {
  std::vector<BottleneckSpec> out;
  int x = stem_channels;
  for (const auto& b : blocks) {
    out.push_back(BottleneckSpec{x, b.out_channels, b.stride, b.expansion, kKernel});
    x = b.out_channels;
  }
  return out;
}

NetConfig NetConfig::malite_default(int classes, int input_channels) {
  NetConfig c;
  c.input_channels = input_channels;
  c.stem_channels = 32;
  c.stem_stride = 2;
  c.blocks = {
      {16, 1, 1}, {24, 1, 6}, {24, 2, 6}, {24, 1, 6},
      {32, 2, 6}, {32, 1, 6}, {32, 1, 6}, {64, 2, 6},
  };
  c.head_channels = 160;
  c.classes = classes;
  return c;
}

NetConfig NetConfig::scaled(double factor) const {
  auto s = [factor](int ch) { return std::max(4, static_cast<int>(std::lround(ch * factor))); };
  NetConfig c = *this;
  c.stem_channels = s(stem_channels);
  for (auto& b : c.blocks) b.out_channels = s(b.out_channels);
  c.head_channels = s(head_channels);
  return c;
}

std::string to_json(const NetConfig& cfg) {
  nlohmann::json j;
  j["input_channels"] = cfg.input_channels;
  j["stem_channels"] = cfg.stem_channels;
  j["stem_stride"] = cfg.stem_stride;
  j["head_channels"] = cfg.head_channels;
  j["classes"] = cfg.classes;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : cfg.blocks) {
    j["blocks"].push_back({{"out_channels", b.out_channels}, {"stride", b.stride}, {"expansion", b.expansion}});
  }
  return j.dump();
}

NetConfig net_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, std::string("bad network config JSON: ") + e.what());
  }
  NetConfig c = NetConfig::malite_default();
  try {
    c.input_channels = j.value("input_channels", c.input_channels);
    c.stem_channels = j.value("stem_channels", c.stem_channels);
    c.stem_stride = j.value("stem_stride", c.stem_stride);
    c.head_channels = j.value("head_channels", c.head_channels);
    c.classes = j.value("classes", c.classes);
    if (j.contains("blocks")) {
      c.blocks.clear();
      for (const auto& b : j.at("blocks")) {
        c.blocks.push_back({b.at("out_channels").get<int>(), b.value("stride", 1), b.value("expansion", 6)});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("bad network config: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(lr_end > 0.0 && lr_start >= lr_end)) fail(ErrorKind::InvalidConfig, "need lr_start >= lr_end > 0");
  if (warmup_steps < 0 || epochs < 1 || batch_size < 1) fail(ErrorKind::InvalidConfig, "bad training schedule");
}

LrSchedule::LrSchedule(double lr_start, double lr_end, int warmup_steps, long total_steps)
    : start_(lr_start), end_(lr_end), warmup_(warmup_steps), total_(total_steps) {}

double LrSchedule::at(long step) const {
  if (step < warmup_) return start_ * static_cast<double>(step + 1) / warmup_;
  const long span = total_ - warmup_;
  double progress = span > 1 ? static_cast<double>(step - warmup_) / static_cast<double>(span - 1) : 1.0;
  progress = std::clamp(progress, 0.0, 1.0);
  return end_ + (start_ - end_) * std::cos(progress * std::numbers::pi / 2.0);
}

void Adam::step(const std::vector<Param<float>*>& params, double lr) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.size(), 0.0f);
      v_.emplace_back(p->value.size(), 0.0f);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<float>& p = *params[k];
    if (!p.trainable) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      m[i] = static_cast<float>(b1_ * m[i] + (1.0 - b1_) * g);
      v[i] = static_cast<float>(b2_ * v[i] + (1.0 - b2_) * g * g);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value.data[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

Trainer::Trainer(Model<float>& model, const TrainConfig& cfg, long total_steps)
    : model_(model), cfg_(cfg),
      schedule_(cfg.lr_start, cfg.lr_end, cfg.warmup_steps, total_steps),
      adam_(cfg.beta1, cfg.beta2, cfg.epsilon) {
  cfg_.validate();
}

double Trainer::train_step(const Batch& batch) {
  model_.zero_grad();
  Tensor<float> logits = model_.forward(batch.images, Mode::Train);
  auto loss = softmax_cross_entropy(logits, batch.labels);
  if (!std::isfinite(loss.loss)) {
    std::ostringstream os;
    os << "non-finite loss " << loss.loss << " at step " << step_ << " (lr " << schedule_.at(step_)
       << ", batch " << to_string(batch.images.shape) << ")";
    fail(ErrorKind::NumericalError, os.str());
  }
  model_.backward(loss.grad);
  adam_.step(model_.params(), schedule_.at(step_));
  ++step_;
  return loss.loss;
}

Prediction predict(Model<float>& model, const Tensor<float>& images) {
  Tensor<float> p = softmax(model.forward(images, Mode::Infer));
  Prediction out;
  const int k = p.shape.c;
  for (int n = 0; n < p.shape.n; ++n) {
    std::vector<float> row(p.data.begin() + static_cast<std::ptrdiff_t>(n) * k,
                           p.data.begin() + static_cast<std::ptrdiff_t>(n + 1) * k);
    out.classes.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    out.probabilities.push_back(std::move(row));
  }
  return out;
}

Tensor<float> image_tensor(std::span<const std::uint8_t> pixels, int h, int w, int c) {
  Shape s{1, h, w, c};
  check_shape(pixels.size() == s.size(), "pixel buffer does not match image shape");
  Tensor<float> t(s);
  for (std::size_t i = 0; i < pixels.size(); ++i) t.data[i] = static_cast<float>(pixels[i]) / 255.0f;
  return t;
}

void write_weights(const Model<float>& model, ByteWriter& w) {
  auto params = model.params();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (auto* p : params) {
    w.u16(static_cast<std::uint16_t>(p->name.size()));
    w.str(p->name);
    w.u8(static_cast<std::uint8_t>(p->dims.size()));
    for (auto d : p->dims) w.u32(d);
    for (float v : p->value.data) w.f32(v);
  }
}

void read_weights(Model<float>& model, ByteReader& r) {
  auto params = model.params();
  const std::uint32_t count = r.u32();
  if (count != params.size()) fail(ErrorKind::FormatError, "weight tensor count does not match the network");
  for (auto* p : params) {
    const std::string name = r.str(r.u16());
    if (name != p->name) fail(ErrorKind::FormatError, "expected tensor '" + p->name + "', found '" + name + "'");
    const std::uint8_t ndim = r.u8();
    std::vector<std::uint32_t> dims(ndim);
    for (auto& d : dims) d = r.u32();
    if (dims != p->dims) fail(ErrorKind::FormatError, "tensor '" + name + "' has unexpected dimensions");
    if (r.remaining() < p->value.size() * 4) fail(ErrorKind::FormatError, "truncated tensor '" + name + "'");
    for (auto& v : p->value.data) v = r.f32();
  }
}

}  // namespace malite
