#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "handoff/image.hpp"
#include "handoff/manager.hpp"
#include "handoff/net.hpp"

namespace handoff::mgr {

/// One manager observation: both drivers' degraded views (CHW uint8 planes)
/// plus the normalized context vector.
struct ManagerObs {
  std::vector<uint8_t> human;   // 3 * res * res
  std::vector<uint8_t> ai;      // 3 * res * res
  std::vector<float> context;   // ContextFeatures::kDim
};

inline std::vector<uint8_t> image_to_planes(const Image& img) {
  const size_t n = size_t(img.width()) * img.height();
  std::vector<uint8_t> out(3 * n);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Rgb& p = img.at(x, y);
      const size_t i = size_t(y) * img.width() + x;
      out[i] = p.r;
      out[n + i] = p.g;
      out[2 * n + i] = p.b;
    }
  }
  return out;
}

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct QNetArch {
  int image_res = 48;
  int context_dim = ContextFeatures::kDim;
  std::vector<int> conv_channels{16, 32, 32};
  int kernel = 3;
  int stride = 2;
  std::vector<int> hidden{256, 128};
  int actions = 2;

  std::string serialize() const {
    std::ostringstream s;
    s << "res=" << image_res << " context=" << context_dim << " conv=";
    for (size_t i = 0; i < conv_channels.size(); ++i) s << (i ? "," : "") << conv_channels[i];
    s << " kernel=" << kernel << " stride=" << stride << " hidden=";
    for (size_t i = 0; i < hidden.size(); ++i) s << (i ? "," : "") << hidden[i];
    s << " actions=" << actions;
    return s.str();
  }

  bool operator==(const QNetArch&) const = default;
};

/// Two convolutional heads (one per driver observation) whose flattened
/// outputs are concatenated with the context vector and fed to the hidden
/// layers; output is one value per delegation action.
template <typename T>
class ManagerQNet {
 public:
  using Obs = ManagerObs;

  ManagerQNet(const QNetArch& arch, uint64_t seed, int threads = 0)
      : arch_(arch),
        threads_(threads > 0 ? threads : net::detail::default_threads()) {
    Rng rng(seed);
    head_dim_ = build_head(head_human_, rng);
    build_head(head_ai_, rng);
    const int trunk_in = 2 * head_dim_ + arch_.context_dim;
    int prev = trunk_in;
    for (int h : arch_.hidden) {
      trunk_.add(std::make_unique<net::Linear<T>>(prev, h, rng, threads_));
      trunk_.add(std::make_unique<net::Relu<T>>());
      prev = h;
    }
    trunk_.add(std::make_unique<net::Linear<T>>(prev, arch_.actions, rng, threads_));
  }

  const QNetArch& arch() const { return arch_; }
  int n_actions() const { return arch_.actions; }

  net::Mat<T> forward(const std::vector<const Obs*>& batch, bool train) {
    const int n = int(batch.size());
    const int img_f = 3 * arch_.image_res * arch_.image_res;
    net::Mat<T> in_h(n, img_f), in_a(n, img_f);
    for (int s = 0; s < n; ++s) {
      const Obs& o = *batch[size_t(s)];
      if (int(o.human.size()) != img_f || int(o.ai.size()) != img_f)
        throw ShapeError("observation image size does not match network input");
      if (int(o.context.size()) != arch_.context_dim)
        throw ShapeError("context vector length does not match network input");
      T* h = in_h.row(s);
      T* a = in_a.row(s);
      for (int i = 0; i < img_f; ++i) {
        h[i] = T(o.human[size_t(i)]) / T(255);
        a[i] = T(o.ai[size_t(i)]) / T(255);
      }
    }
    net::Mat<T> rho_h = head_human_.forward(in_h, train);
    net::Mat<T> rho_a = head_ai_.forward(in_a, train);

    net::Mat<T> trunk_in(n, 2 * head_dim_ + arch_.context_dim);
    for (int s = 0; s < n; ++s) {
      T* d = trunk_in.row(s);
      std::copy(rho_h.row(s), rho_h.row(s) + head_dim_, d);
      std::copy(rho_a.row(s), rho_a.row(s) + head_dim_, d + head_dim_);
      const Obs& o = *batch[size_t(s)];
      for (int i = 0; i < arch_.context_dim; ++i)
        d[2 * head_dim_ + i] = T(o.context[size_t(i)]);
    }
    return trunk_.forward(trunk_in, train);
  }

  /// Q values for a single observation in inference mode (running statistics).
  std::vector<double> q_values(const Obs& obs) {
    std::vector<const Obs*> batch{&obs};
    const net::Mat<T> q = forward(batch, /*train=*/false);
    std::vector<double> out(size_t(arch_.actions));
    for (int i = 0; i < arch_.actions; ++i) out[size_t(i)] = double(q.row(0)[i]);
    return out;
  }

  void backward(const net::Mat<T>& grad_q) {
    const net::Mat<T> d_in = trunk_.backward(grad_q);
    net::Mat<T> d_h(d_in.n, head_dim_), d_a(d_in.n, head_dim_);
    for (int s = 0; s < d_in.n; ++s) {
      std::copy(d_in.row(s), d_in.row(s) + head_dim_, d_h.row(s));
      std::copy(d_in.row(s) + head_dim_, d_in.row(s) + 2 * head_dim_, d_a.row(s));
    }
    head_human_.backward(d_h);
    head_ai_.backward(d_a);
  }

  std::vector<net::ParamView<T>> params() {
    std::vector<net::ParamView<T>> out;
    for (auto p : head_human_.params()) out.push_back(p);
    for (auto p : head_ai_.params()) out.push_back(p);
    for (auto p : trunk_.params()) out.push_back(p);
    return out;
  }

  std::vector<std::vector<T>*> state() {
    std::vector<std::vector<T>*> out;
    for (auto s : head_human_.state()) out.push_back(s);
    for (auto s : head_ai_.state()) out.push_back(s);
    for (auto s : trunk_.state()) out.push_back(s);
    return out;
  }

  void sync_from(ManagerQNet& src) {
    if (!(arch_ == src.arch_)) throw ShapeError("network architecture mismatch");
    auto pd = params();
    auto ps = src.params();
    for (size_t i = 0; i < pd.size(); ++i) *pd[i].value = *ps[i].value;
    auto sd = state();
    auto ss = src.state();
    for (size_t i = 0; i < sd.size(); ++i) *sd[i] = *ss[i];
  }

  // --- checkpoint container ------------------------------------------------
  // Self-describing: version line, scalar width, architecture line, then the
  // raw parameter/statistics payload in declaration order.

  static constexpr const char* kMagic = "handoff-qnet";
  static constexpr int kVersion = 1;

  void save(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << kMagic << " v" << kVersion << "\n";
    out << "scalar f" << sizeof(T) * 8 << "\n";
    out << "arch " << arch_.serialize() << "\n";
    size_t total = 0;
    auto ps = params();
    auto ss = state();
    for (auto& p : ps) total += p.value->size();
    for (auto* s : ss) total += s->size();
    out << "data " << total << "\n";
    for (auto& p : ps)
      out.write(reinterpret_cast<const char*>(p.value->data()),
                std::streamsize(p.value->size() * sizeof(T)));
    for (auto* s : ss)
      out.write(reinterpret_cast<const char*>(s->data()), std::streamsize(s->size() * sizeof(T)));
  }

  void load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line != std::string(kMagic) + " v" + std::to_string(kVersion))
      throw ShapeError("unrecognized checkpoint header: " + line);
    std::getline(in, line);
    if (line != "scalar f" + std::to_string(sizeof(T) * 8))
      throw ShapeError("checkpoint scalar width mismatch: " + line);
    std::getline(in, line);
    if (line != "arch " + arch_.serialize())
      throw ShapeError("checkpoint architecture mismatch: " + line);
    std::getline(in, line);
    size_t total = 0;
    {
      std::istringstream s(line);
      std::string word;
      s >> word >> total;
      if (word != "data") throw ShapeError("malformed checkpoint data header");
    }
    size_t expect = 0;
    auto ps = params();
    auto ss = state();
    for (auto& p : ps) expect += p.value->size();
    for (auto* s : ss) expect += s->size();
    if (total != expect) throw ShapeError("checkpoint payload size mismatch");
    for (auto& p : ps)
      in.read(reinterpret_cast<char*>(p.value->data()),
              std::streamsize(p.value->size() * sizeof(T)));
    for (auto* s : ss)
      in.read(reinterpret_cast<char*>(s->data()), std::streamsize(s->size() * sizeof(T)));
    if (!in) throw ShapeError("checkpoint payload truncated");
  }

  /// Architecture line of a checkpoint on disk, for pre-load validation.
  static std::string peek_arch(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    std::getline(in, l3);
    if (l3.rfind("arch ", 0) != 0) throw ShapeError("malformed checkpoint");
    return l3.substr(5);
  }

 private:
  int build_head(net::Sequential<T>& head, Rng& rng) {
    int c = 3, h = arch_.image_res, w = arch_.image_res;
    for (int oc : arch_.conv_channels) {
      auto conv = std::make_unique<net::Conv2d<T>>(c, h, w, oc, arch_.kernel, arch_.stride, rng,
                                                   threads_);
      const int oh = conv->out_h();
      const int ow = conv->out_w();
      head.add(std::move(conv));
      head.add(std::make_unique<net::BatchNorm<T>>(oc, oh * ow));
      head.add(std::make_unique<net::Relu<T>>());
      c = oc;
      h = oh;
      w = ow;
    }
    return c * h * w;
  }

  QNetArch arch_;
  int threads_;
  int head_dim_ = 0;
  net::Sequential<T> head_human_;
  net::Sequential<T> head_ai_;
  net::Sequential<T> trunk_;
};

}  // namespace handoff::mgr
