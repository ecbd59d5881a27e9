#include "rtlguard/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rtlguard/io.hpp"
#include "rtlguard/rng.hpp"

namespace rtlguard {

namespace {

constexpr std::string_view kMagic = "CGSAE1";

void check_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(got) + ", expected " +
                         std::to_string(want));
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

struct Adam {
  std::vector<double> m, v;
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::span<double> p, const std::vector<double>& g, double lr, int t) {
    const double c1 = 1.0 - std::pow(0.9, t);
    const double c2 = 1.0 - std::pow(0.999, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
    }
  }
};

}  // namespace

SparseAutoencoder::SparseAutoencoder(int layer, std::size_t d, std::size_t m, double lambda)
    : layer_(layer), d_(d), m_(m), we_(m * d, 0.0), be_(m, 0.0), wd_(m * d, 0.0), bd_(d, 0.0) {
  if (d == 0 || m == 0) throw ConfigError("sae dimensions must be >= 1");
  set_lambda(lambda);
}

void SparseAutoencoder::set_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("sae lambda must be finite and >= 0");
  lambda_ = lambda;
}

std::span<const double> SparseAutoencoder::column(std::size_t i) const {
  if (i >= m_) throw DimensionError("latent index " + std::to_string(i) + " out of range");
  return std::span<const double>(wd_).subspan(i * d_, d_);
}

void SparseAutoencoder::normalize_columns() {
  for (std::size_t j = 0; j < m_; ++j) {
    double* c = wd_.data() + j * d_;
    const double n = std::sqrt(dot(c, c, d_));
    if (n > 0) {
      for (std::size_t i = 0; i < d_; ++i) c[i] /= n;
    }
  }
}

std::vector<double> SparseAutoencoder::encode(std::span<const double> h) const {
  check_len(h.size(), d_, "sae encode");
  std::vector<double> z(m_);
  for (std::size_t j = 0; j < m_; ++j) {
    z[j] = std::max(0.0, be_[j] + dot(we_.data() + j * d_, h.data(), d_));
  }
  return z;
}

std::vector<double> SparseAutoencoder::encode(std::span<const float> h) const {
  std::vector<double> hd(h.begin(), h.end());
  return encode(std::span<const double>(hd));
}

std::vector<double> SparseAutoencoder::decode(std::span<const double> z) const {
  check_len(z.size(), m_, "sae decode");
  std::vector<double> out(bd_);
  for (std::size_t j = 0; j < m_; ++j) {
    if (z[j] == 0.0) continue;
    const double* c = wd_.data() + j * d_;
    for (std::size_t i = 0; i < d_; ++i) out[i] += z[j] * c[i];
  }
  return out;
}

SaeLoss sae_loss(const SparseAutoencoder& sae, const std::vector<std::vector<double>>& batch) {
  if (batch.empty()) throw ConfigError("sae_loss: empty batch");
  SaeLoss loss;
  for (const auto& h : batch) {
    const auto z = sae.encode(h);
    const auto hh = sae.decode(z);
    double err = 0;
    for (std::size_t i = 0; i < h.size(); ++i) err += (hh[i] - h[i]) * (hh[i] - h[i]);
    loss.mse += err;
    loss.l1 += sae.lambda() * std::accumulate(z.begin(), z.end(), 0.0);
  }
  const double n = static_cast<double>(batch.size());
  loss.mse /= n;
  loss.l1 /= n;
  loss.total = loss.mse + loss.l1;
  return loss;
}

SaeLoss sae_gradients(const SparseAutoencoder& sae, const std::vector<std::vector<double>>& batch,
                      SaeGradients& g) {
  if (batch.empty()) throw ConfigError("sae_gradients: empty batch");
  const std::size_t d = sae.input_dim();
  const std::size_t m = sae.latent_dim();
  g.we.assign(m * d, 0.0);
  g.be.assign(m, 0.0);
  g.wd.assign(m * d, 0.0);
  g.bd.assign(d, 0.0);
  const double n = static_cast<double>(batch.size());
  const double lam = sae.lambda();
  const auto we = sae.encoder_weights();
  const auto be = sae.encoder_bias();
  const auto wd = sae.decoder_weights();
  SaeLoss loss;
  std::vector<double> pre(m), z(m), dh(d);
  for (const auto& h : batch) {
    check_len(h.size(), d, "sae_gradients");
    for (std::size_t j = 0; j < m; ++j) {
      pre[j] = be[j] + dot(we.data() + j * d, h.data(), d);
      z[j] = std::max(0.0, pre[j]);
    }
    const auto hh = sae.decode(z);
    double err = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = hh[i] - h[i];
      err += r * r;
      dh[i] = 2.0 * r / n;
      g.bd[i] += dh[i];
    }
    loss.mse += err / n;
    for (std::size_t j = 0; j < m; ++j) {
      if (pre[j] <= 0.0) continue;
      loss.l1 += lam * z[j] / n;
      double* gwd = g.wd.data() + j * d;
      for (std::size_t i = 0; i < d; ++i) gwd[i] += z[j] * dh[i];
      const double dz = dot(wd.data() + j * d, dh.data(), d) + lam / n;
      g.be[j] += dz;
      double* gwe = g.we.data() + j * d;
      for (std::size_t i = 0; i < d; ++i) gwe[i] += dz * h[i];
    }
  }
  loss.total = loss.mse + loss.l1;
  return loss;
}

double relative_mse(const SparseAutoencoder& sae, const std::vector<std::vector<double>>& data) {
  if (data.empty()) throw ConfigError("relative_mse: no data");
  const std::size_t d = sae.input_dim();
  std::vector<double> mean(d, 0.0);
  for (const auto& h : data) {
    check_len(h.size(), d, "relative_mse");
    for (std::size_t i = 0; i < d; ++i) mean[i] += h[i];
  }
  for (double& v : mean) v /= static_cast<double>(data.size());
  double err = 0, var = 0;
  for (const auto& h : data) {
    const auto hh = sae.decode(sae.encode(h));
    for (std::size_t i = 0; i < d; ++i) {
      err += (hh[i] - h[i]) * (hh[i] - h[i]);
      var += (h[i] - mean[i]) * (h[i] - mean[i]);
    }
  }
  return var > 0 ? err / var : (err > 0 ? INFINITY : 0.0);
}

double mean_l0(const SparseAutoencoder& sae, const std::vector<std::vector<double>>& data) {
  if (data.empty()) return 0;
  double active = 0;
  for (const auto& h : data) {
    for (double v : sae.encode(h)) active += v > 0.0 ? 1.0 : 0.0;
  }
  return active / static_cast<double>(data.size());
}

SparseAutoencoder train_sae(const std::vector<std::vector<double>>& data, const SaeTrainOptions& o, int layer,
                            SaeTrainReport* report) {
  if (data.empty()) throw ConfigError("train_sae: no activation vectors");
  if (o.batch == 0 || o.steps < 0) throw ConfigError("train_sae: batch >= 1 and steps >= 0 required");
  const std::size_t d = data.front().size();
  for (const auto& h : data) {
    check_len(h.size(), d, "train_sae");
    for (double v : h) {
      if (!std::isfinite(v)) throw NumericalError("train_sae: non-finite activation in input");
    }
  }
  const std::size_t m = o.latents;
  SparseAutoencoder sae(layer, d, m, o.lambda);
  Rng rng(o.seed);
  auto wd = sae.decoder_weights();
  for (double& v : wd) v = rng.normal();
  sae.normalize_columns();
  auto we = sae.encoder_weights();
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < d; ++i) we[j * d + i] = wd[j * d + i];
  }
  auto bd = sae.decoder_bias();
  for (const auto& h : data) {
    for (std::size_t i = 0; i < d; ++i) bd[i] += h[i];
  }
  for (double& v : bd) v /= static_cast<double>(data.size());

  if (report) report->initial = sae_loss(sae, data);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t cursor = 0;
  const std::size_t bs = std::min(o.batch, data.size());
  Adam a_we(m * d), a_be(m), a_wd(m * d), a_bd(d);
  SaeGradients g;
  std::vector<std::vector<double>> batch(bs);
  for (int step = 1; step <= o.steps; ++step) {
    for (auto& row : batch) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      row = data[order[cursor++]];
    }
    const SaeLoss loss = sae_gradients(sae, batch, g);
    if (!std::isfinite(loss.total)) {
      throw NumericalError("train_sae: non-finite loss at step " + std::to_string(step));
    }
    a_we.step(sae.encoder_weights(), g.we, o.learning_rate, step);
    a_be.step(sae.encoder_bias(), g.be, o.learning_rate, step);
    a_wd.step(sae.decoder_weights(), g.wd, o.learning_rate, step);
    a_bd.step(sae.decoder_bias(), g.bd, o.learning_rate, step);
    sae.normalize_columns();
    if (o.on_log && o.log_every > 0 && (step % o.log_every == 0 || step == o.steps)) o.on_log(step, loss);
  }
  if (report) {
    report->final = sae_loss(sae, data);
    report->mean_l0 = mean_l0(sae, data);
  }
  return sae;
}

std::string format_sae(const SparseAutoencoder& sae) {
  std::string out(kMagic);
  out += "\nlayer " + std::to_string(sae.layer()) + "\n";
  out += "d " + std::to_string(sae.input_dim()) + "\n";
  out += "m " + std::to_string(sae.latent_dim()) + "\n";
  out += "lambda " + io::format_double(sae.lambda()) + "\n";
  out += "data\n";
  io::append_doubles(out, sae.encoder_weights());
  io::append_doubles(out, sae.encoder_bias());
  io::append_doubles(out, sae.decoder_weights());
  io::append_doubles(out, sae.decoder_bias());
  return out;
}

SparseAutoencoder parse_sae(std::string_view data) {
  io::Reader r(data);
  if (r.line() != kMagic) throw FormatError("not a CGSAE1 checkpoint");
  auto field = [&](std::string_view key) {
    const auto line = r.line();
    auto parts = io::split(line, ' ');
    if (parts.size() != 2 || parts[0] != key) {
      throw FormatError("expected '" + std::string(key) + " <value>', got '" + std::string(line) + "'");
    }
    return parts[1];
  };
  const int layer = static_cast<int>(io::parse_int(field("layer")));
  const auto d = io::parse_int(field("d"));
  const auto m = io::parse_int(field("m"));
  const double lambda = io::parse_double(field("lambda"));
  if (d < 1 || m < 1) throw FormatError("sae checkpoint has non-positive dimensions");
  if (r.line() != "data") throw FormatError("sae checkpoint missing data marker");
  SparseAutoencoder sae(layer, static_cast<std::size_t>(d), static_cast<std::size_t>(m), lambda);
  r.doubles(sae.encoder_weights());
  r.doubles(sae.encoder_bias());
  r.doubles(sae.decoder_weights());
  r.doubles(sae.decoder_bias());
  if (!r.done()) throw FormatError("trailing bytes after sae data");
  return sae;
}

void save_sae(const SparseAutoencoder& sae, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_sae(sae));
}

SparseAutoencoder load_sae(const std::filesystem::path& path) { return parse_sae(io::read_file(path)); }

}  // namespace rtlguard
