#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "ddcml/nd/tensor.hpp"
#include "ddcml/volume.hpp"

namespace ddcml::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ddcml-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Volume random_volume(Dims3 d, std::uint64_t seed, double lo = 0.0, double hi = 255.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> vox(d.count());
  for (auto& v : vox) v = static_cast<float>(u(rng));
  return Volume(d, std::move(vox));
}

template <class T>
nd::Tensor<T> random_tensor(nd::Shape shape, std::uint64_t seed, bool requires_grad = false, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<T> data(nd::numel(shape));
  for (auto& v : data) v = static_cast<T>(n(rng));
  return nd::Tensor<T>(std::move(shape), std::move(data), requires_grad);
}

inline std::ifstream open_oracle(const std::string& name) {
  std::ifstream is(std::filesystem::path(DDCML_ORACLE_DIR) / name);
  if (!is) throw std::runtime_error("missing oracle table " + name);
  return is;
}

template <class V>
std::vector<V> read_values(std::istream& is, std::size_t n) {
  std::vector<V> out(n);
  for (auto& v : out) is >> v;
  if (!is) throw std::runtime_error("oracle table ended early");
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t refined = 0;  // entries that needed a smaller step
  std::string worst;        // "<tensor>[<index>] analytic=.. numeric=.."
};

struct GradCheckOptions {
  double h = 1e-5;
  double floor = 1e-6;
  // Entries whose error exceeds this are re-differenced at 10h, h/10 and
  // h/100 and the best agreement kept. A ReLU or pooling switch inside
  // [x-h, x+h] spoils the difference at h but not at a smaller step; a
  // gradient near the floor is round-off limited and wants a larger one.
  double retry_above = INFINITY;
};

/// Compares the analytic gradient of `loss` with central differences for
/// every element of every tensor in `params`. Relative error is
/// |a - n| / max(|a|, |n|, floor) so that entries whose gradient is pure
/// round-off do not dominate.
inline GradCheck check_gradients(const std::vector<std::pair<std::string, nd::Tensor<double>>>& params,
                                 const std::function<nd::Tensor<double>()>& loss, const GradCheckOptions& opt = {}) {
  for (auto [name, p] : params) p.zero_grad();
  nd::backward(loss());
  GradCheck r;
  for (auto [name, p] : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      auto central = [&](double h) {
        data[i] = saved + h;
        const double up = loss().item();
        data[i] = saved - h;
        const double down = loss().item();
        data[i] = saved;
        return (up - down) / (2.0 * h);
      };
      auto rel = [&](double numeric) {
        return std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
      };
      double numeric = central(opt.h), err = rel(numeric);
      if (err > opt.retry_above) {
        ++r.refined;
        for (double h : {opt.h * 10, opt.h / 10, opt.h / 100}) {
          const double n = central(h);
          if (const double e = rel(n); e < err) {
            err = e;
            numeric = n;
          }
        }
      }
      ++r.checked;
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic[i]) +
                  " numeric=" + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace ddcml::testing
