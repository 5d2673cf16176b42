#include "magsig/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace magsig::models {
namespace {

MatrixXd softmax_rows(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

double cross_entropy(const MatrixXd& probs, const VectorXi& y) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    loss -= std::log(std::max(probs(i, y[i]), 1e-300));
  return loss / static_cast<double>(probs.rows());
}

// dLoss/dLogits for mean cross-entropy.
MatrixXd logit_gradient(const MatrixXd& probs, const VectorXi& y) {
  MatrixXd d = probs;
  for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, y[i]) -= 1.0;
  return d / static_cast<double>(d.rows());
}

MatrixXd uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                      std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

// Rows of x reshaped into sequence steps, oldest block first. Block 0 of the
// feature vector is the newest frame, so step t reads block (steps-1-t).
MatrixXd step_input(const MatrixXd& x, int steps, int t) {
  const Eigen::Index block = x.cols() / steps;
  return x.middleCols((steps - 1 - t) * block, block);
}

// ---------------------------------------------------------------------------
// Fully connected network (empty hidden list = linear softmax).

class DnnNet : public Classifier {
 public:
  DnnNet(int input_dim, const std::vector<int>& hidden, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(kNumClasses);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      w_.push_back(uniform_init(dims[l + 1], dims[l], dims[l], rng));
      b_.push_back(MatrixXd::Zero(dims[l + 1], 1));
    }
  }

  MatrixXd predict_proba(const MatrixXd& x) const override {
    MatrixXd a = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      MatrixXd z = a * w_[l].transpose();
      z.rowwise() += b_[l].col(0).transpose();
      a = (l + 1 < w_.size()) ? z.array().max(0.0).matrix() : z;
    }
    return softmax_rows(a);
  }

  double loss_and_gradients(const MatrixXd& x, const VectorXi& y,
                            std::vector<MatrixXd>& grads) const override {
    const std::size_t layers = w_.size();
    std::vector<MatrixXd> act(layers + 1);
    act[0] = x;
    for (std::size_t l = 0; l < layers; ++l) {
      MatrixXd z = act[l] * w_[l].transpose();
      z.rowwise() += b_[l].col(0).transpose();
      act[l + 1] = (l + 1 < layers) ? z.array().max(0.0).matrix() : z;
    }
    const MatrixXd probs = softmax_rows(act[layers]);
    const double loss = cross_entropy(probs, y);

    grads.assign(2 * layers, MatrixXd());
    MatrixXd dz = logit_gradient(probs, y);
    for (std::size_t l = layers; l-- > 0;) {
      grads[2 * l] = dz.transpose() * act[l];
      grads[2 * l + 1] = dz.colwise().sum().transpose();
      if (l > 0) {
        MatrixXd da = dz * w_[l];
        dz = (act[l].array() > 0.0).cast<double>() * da.array();
      }
    }
    return loss;
  }

  std::vector<MatrixXd*> parameters() override {
    std::vector<MatrixXd*> p;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      p.push_back(&w_[l]);
      p.push_back(&b_[l]);
    }
    return p;
  }

  std::vector<std::string> parameter_names() const override {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      names.push_back("w" + std::to_string(l));
      names.push_back("b" + std::to_string(l));
    }
    return names;
  }

  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<DnnNet>(*this);
  }

 private:
  std::vector<MatrixXd> w_, b_;
};

// ---------------------------------------------------------------------------
// Vanilla tanh RNN over the 3-step block sequence.

class RnnNet : public Classifier {
 public:
  RnnNet(int input_dim, int hidden, int steps, std::uint64_t seed)
      : steps_(steps) {
    if (input_dim % steps != 0)
      throw std::invalid_argument("RnnNet: input_dim must divide into steps");
    const int block = input_dim / steps;
    std::mt19937_64 rng(seed);
    wx_ = uniform_init(hidden, block, block, rng);
    wh_ = uniform_init(hidden, hidden, hidden, rng);
    bh_ = MatrixXd::Zero(hidden, 1);
    wo_ = uniform_init(kNumClasses, hidden, hidden, rng);
    bo_ = MatrixXd::Zero(kNumClasses, 1);
  }

  MatrixXd predict_proba(const MatrixXd& x) const override {
    MatrixXd h = MatrixXd::Zero(x.rows(), wh_.rows());
    for (int t = 0; t < steps_; ++t) {
      MatrixXd z = step_input(x, steps_, t) * wx_.transpose() + h * wh_.transpose();
      z.rowwise() += bh_.col(0).transpose();
      h = z.array().tanh();
    }
    MatrixXd logits = h * wo_.transpose();
    logits.rowwise() += bo_.col(0).transpose();
    return softmax_rows(logits);
  }

  double loss_and_gradients(const MatrixXd& x, const VectorXi& y,
                            std::vector<MatrixXd>& grads) const override {
    const Eigen::Index n = x.rows();
    std::vector<MatrixXd> h(steps_ + 1);
    h[0] = MatrixXd::Zero(n, wh_.rows());
    for (int t = 0; t < steps_; ++t) {
      MatrixXd z = step_input(x, steps_, t) * wx_.transpose() + h[t] * wh_.transpose();
      z.rowwise() += bh_.col(0).transpose();
      h[t + 1] = z.array().tanh();
    }
    MatrixXd logits = h[steps_] * wo_.transpose();
    logits.rowwise() += bo_.col(0).transpose();
    const MatrixXd probs = softmax_rows(logits);
    const double loss = cross_entropy(probs, y);

    MatrixXd gwx = MatrixXd::Zero(wx_.rows(), wx_.cols());
    MatrixXd gwh = MatrixXd::Zero(wh_.rows(), wh_.cols());
    MatrixXd gbh = MatrixXd::Zero(bh_.rows(), 1);
    const MatrixXd dlogits = logit_gradient(probs, y);
    MatrixXd gwo = dlogits.transpose() * h[steps_];
    MatrixXd gbo = dlogits.colwise().sum().transpose();

    MatrixXd dh = dlogits * wo_;
    for (int t = steps_; t-- > 0;) {
      const MatrixXd dz =
          (dh.array() * (1.0 - h[t + 1].array().square())).matrix();
      gwx += dz.transpose() * step_input(x, steps_, t);
      gwh += dz.transpose() * h[t];
      gbh += dz.colwise().sum().transpose();
      dh = dz * wh_;
    }
    grads = {gwx, gwh, gbh, gwo, gbo};
    return loss;
  }

  std::vector<MatrixXd*> parameters() override {
    return {&wx_, &wh_, &bh_, &wo_, &bo_};
  }
  std::vector<std::string> parameter_names() const override {
    return {"wx", "wh", "bh", "wo", "bo"};
  }
  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<RnnNet>(*this);
  }

 private:
  int steps_;
  MatrixXd wx_, wh_, bh_, wo_, bo_;
};

// ---------------------------------------------------------------------------
// GRU: h_t = (1-z)*h_{t-1} + z*htilde.

class GruNet : public Classifier {
 public:
  GruNet(int input_dim, int hidden, int steps, std::uint64_t seed)
      : steps_(steps) {
    if (input_dim % steps != 0)
      throw std::invalid_argument("GruNet: input_dim must divide into steps");
    const int block = input_dim / steps;
    std::mt19937_64 rng(seed);
    for (auto* m : {&wxz_, &wxr_, &wxh_}) *m = uniform_init(hidden, block, block, rng);
    for (auto* m : {&whz_, &whr_, &whh_}) *m = uniform_init(hidden, hidden, hidden, rng);
    bz_ = br_ = bh_ = MatrixXd::Zero(hidden, 1);
    wo_ = uniform_init(kNumClasses, hidden, hidden, rng);
    bo_ = MatrixXd::Zero(kNumClasses, 1);
  }

  MatrixXd predict_proba(const MatrixXd& x) const override {
    Cache cache;
    return softmax_rows(forward(x, cache));
  }

  double loss_and_gradients(const MatrixXd& x, const VectorXi& y,
                            std::vector<MatrixXd>& grads) const override {
    Cache c;
    const MatrixXd probs = softmax_rows(forward(x, c));
    const double loss = cross_entropy(probs, y);

    MatrixXd gwxz = MatrixXd::Zero(wxz_.rows(), wxz_.cols()), gwhz = MatrixXd::Zero(whz_.rows(), whz_.cols());
    MatrixXd gwxr = MatrixXd::Zero(wxr_.rows(), wxr_.cols()), gwhr = MatrixXd::Zero(whr_.rows(), whr_.cols());
    MatrixXd gwxh = MatrixXd::Zero(wxh_.rows(), wxh_.cols()), gwhh = MatrixXd::Zero(whh_.rows(), whh_.cols());
    MatrixXd gbz = MatrixXd::Zero(bz_.rows(), 1), gbr = MatrixXd::Zero(br_.rows(), 1), gbh = MatrixXd::Zero(bh_.rows(), 1);

    const MatrixXd dlogits = logit_gradient(probs, y);
    MatrixXd gwo = dlogits.transpose() * c.h.back();
    MatrixXd gbo = dlogits.colwise().sum().transpose();
    MatrixXd dh = dlogits * wo_;

    for (int t = steps_; t-- > 0;) {
      const MatrixXd& z = c.z[t];
      const MatrixXd& r = c.r[t];
      const MatrixXd& hh = c.hh[t];
      const MatrixXd& hp = c.h[t];
      const MatrixXd s = step_input(x, steps_, t);

      const MatrixXd dz = (dh.array() * (hh - hp).array()).matrix();
      const MatrixXd dhh = (dh.array() * z.array()).matrix();
      MatrixXd dhp = (dh.array() * (1.0 - z.array())).matrix();

      const MatrixXd dhhpre = (dhh.array() * (1.0 - hh.array().square())).matrix();
      gwxh += dhhpre.transpose() * s;
      gwhh += dhhpre.transpose() * (r.array() * hp.array()).matrix();
      gbh += dhhpre.colwise().sum().transpose();
      const MatrixXd drh = dhhpre * whh_;
      const MatrixXd dr = (drh.array() * hp.array()).matrix();
      dhp += (drh.array() * r.array()).matrix();

      const MatrixXd drpre = (dr.array() * r.array() * (1.0 - r.array())).matrix();
      gwxr += drpre.transpose() * s;
      gwhr += drpre.transpose() * hp;
      gbr += drpre.colwise().sum().transpose();
      dhp += drpre * whr_;

      const MatrixXd dzpre = (dz.array() * z.array() * (1.0 - z.array())).matrix();
      gwxz += dzpre.transpose() * s;
      gwhz += dzpre.transpose() * hp;
      gbz += dzpre.colwise().sum().transpose();
      dhp += dzpre * whz_;

      dh = dhp;
    }
    grads = {gwxz, gwhz, gbz, gwxr, gwhr, gbr, gwxh, gwhh, gbh, gwo, gbo};
    return loss;
  }

  std::vector<MatrixXd*> parameters() override {
    return {&wxz_, &whz_, &bz_, &wxr_, &whr_, &br_, &wxh_, &whh_, &bh_, &wo_, &bo_};
  }
  std::vector<std::string> parameter_names() const override {
    return {"wxz", "whz", "bz", "wxr", "whr", "br", "wxh", "whh", "bh", "wo", "bo"};
  }
  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<GruNet>(*this);
  }

 private:
  struct Cache {
    std::vector<MatrixXd> h, z, r, hh;
  };

  MatrixXd forward(const MatrixXd& x, Cache& c) const {
    const Eigen::Index n = x.rows();
    c.h.assign(1, MatrixXd::Zero(n, whz_.rows()));
    for (int t = 0; t < steps_; ++t) {
      const MatrixXd s = step_input(x, steps_, t);
      const MatrixXd& hp = c.h.back();
      MatrixXd az = s * wxz_.transpose() + hp * whz_.transpose();
      az.rowwise() += bz_.col(0).transpose();
      MatrixXd ar = s * wxr_.transpose() + hp * whr_.transpose();
      ar.rowwise() += br_.col(0).transpose();
      const MatrixXd z = (1.0 / (1.0 + (-az.array()).exp())).matrix();
      const MatrixXd r = (1.0 / (1.0 + (-ar.array()).exp())).matrix();
      MatrixXd ah = s * wxh_.transpose() +
                    (r.array() * hp.array()).matrix() * whh_.transpose();
      ah.rowwise() += bh_.col(0).transpose();
      const MatrixXd hh = ah.array().tanh();
      const MatrixXd h =
          ((1.0 - z.array()) * hp.array() + z.array() * hh.array()).matrix();
      c.z.push_back(z);
      c.r.push_back(r);
      c.hh.push_back(hh);
      c.h.push_back(h);
    }
    MatrixXd logits = c.h.back() * wo_.transpose();
    logits.rowwise() += bo_.col(0).transpose();
    return logits;
  }

  int steps_;
  MatrixXd wxz_, whz_, bz_, wxr_, whr_, br_, wxh_, whh_, bh_, wo_, bo_;
};

// ---------------------------------------------------------------------------
// LSTM with input/forget/output gates and a cell state.

class LstmNet : public Classifier {
 public:
  LstmNet(int input_dim, int hidden, int steps, std::uint64_t seed)
      : steps_(steps) {
    if (input_dim % steps != 0)
      throw std::invalid_argument("LstmNet: input_dim must divide into steps");
    const int block = input_dim / steps;
    std::mt19937_64 rng(seed);
    for (auto* m : {&wxi_, &wxf_, &wxo_, &wxg_}) *m = uniform_init(hidden, block, block, rng);
    for (auto* m : {&whi_, &whf_, &who_, &whg_}) *m = uniform_init(hidden, hidden, hidden, rng);
    bi_ = bf_ = bo_gate_ = bg_ = MatrixXd::Zero(hidden, 1);
    wo_ = uniform_init(kNumClasses, hidden, hidden, rng);
    bo_ = MatrixXd::Zero(kNumClasses, 1);
  }

  MatrixXd predict_proba(const MatrixXd& x) const override {
    Cache c;
    return softmax_rows(forward(x, c));
  }

  double loss_and_gradients(const MatrixXd& x, const VectorXi& y,
                            std::vector<MatrixXd>& grads) const override {
    Cache c;
    const MatrixXd probs = softmax_rows(forward(x, c));
    const double loss = cross_entropy(probs, y);

    auto zeros_like = [](const MatrixXd& m) {
      return MatrixXd::Zero(m.rows(), m.cols());
    };
    MatrixXd gwxi = zeros_like(wxi_), gwhi = zeros_like(whi_), gbi = zeros_like(bi_);
    MatrixXd gwxf = zeros_like(wxf_), gwhf = zeros_like(whf_), gbf = zeros_like(bf_);
    MatrixXd gwxo = zeros_like(wxo_), gwho = zeros_like(who_), gbo_gate = zeros_like(bo_gate_);
    MatrixXd gwxg = zeros_like(wxg_), gwhg = zeros_like(whg_), gbg = zeros_like(bg_);

    const MatrixXd dlogits = logit_gradient(probs, y);
    MatrixXd gwo = dlogits.transpose() * c.h.back();
    MatrixXd gbo = dlogits.colwise().sum().transpose();
    MatrixXd dh = dlogits * wo_;
    MatrixXd dc = MatrixXd::Zero(dh.rows(), dh.cols());

    for (int t = steps_; t-- > 0;) {
      const MatrixXd s = step_input(x, steps_, t);
      const MatrixXd& i = c.i[t];
      const MatrixXd& f = c.f[t];
      const MatrixXd& o = c.o[t];
      const MatrixXd& g = c.g[t];
      const MatrixXd& cp = c.c[t];
      const MatrixXd tc = c.c[t + 1].array().tanh();

      const MatrixXd do_gate = (dh.array() * tc.array()).matrix();
      dc += (dh.array() * o.array() * (1.0 - tc.array().square())).matrix();

      const MatrixXd di = (dc.array() * g.array()).matrix();
      const MatrixXd dg = (dc.array() * i.array()).matrix();
      const MatrixXd df = (dc.array() * cp.array()).matrix();
      const MatrixXd dc_prev = (dc.array() * f.array()).matrix();

      const MatrixXd dipre = (di.array() * i.array() * (1.0 - i.array())).matrix();
      const MatrixXd dfpre = (df.array() * f.array() * (1.0 - f.array())).matrix();
      const MatrixXd dopre = (do_gate.array() * o.array() * (1.0 - o.array())).matrix();
      const MatrixXd dgpre = (dg.array() * (1.0 - g.array().square())).matrix();

      const MatrixXd& hp = c.h[t];
      gwxi += dipre.transpose() * s; gwhi += dipre.transpose() * hp;
      gbi += dipre.colwise().sum().transpose();
      gwxf += dfpre.transpose() * s; gwhf += dfpre.transpose() * hp;
      gbf += dfpre.colwise().sum().transpose();
      gwxo += dopre.transpose() * s; gwho += dopre.transpose() * hp;
      gbo_gate += dopre.colwise().sum().transpose();
      gwxg += dgpre.transpose() * s; gwhg += dgpre.transpose() * hp;
      gbg += dgpre.colwise().sum().transpose();

      dh = dipre * whi_ + dfpre * whf_ + dopre * who_ + dgpre * whg_;
      dc = dc_prev;
    }
    grads = {gwxi, gwhi, gbi, gwxf, gwhf, gbf, gwxo, gwho, gbo_gate,
             gwxg, gwhg, gbg, gwo, gbo};
    return loss;
  }

  std::vector<MatrixXd*> parameters() override {
    return {&wxi_, &whi_, &bi_, &wxf_, &whf_, &bf_, &wxo_, &who_, &bo_gate_,
            &wxg_, &whg_, &bg_, &wo_, &bo_};
  }
  std::vector<std::string> parameter_names() const override {
    return {"wxi", "whi", "bi", "wxf", "whf", "bf", "wxo", "who", "bog",
            "wxg", "whg", "bg", "wo", "bo"};
  }
  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<LstmNet>(*this);
  }

 private:
  struct Cache {
    std::vector<MatrixXd> h, c, i, f, o, g;
  };

  MatrixXd forward(const MatrixXd& x, Cache& cache) const {
    const Eigen::Index n = x.rows();
    cache.h.assign(1, MatrixXd::Zero(n, whi_.rows()));
    cache.c.assign(1, MatrixXd::Zero(n, whi_.rows()));
    auto sigmoid = [](MatrixXd a) -> MatrixXd {
      return (1.0 / (1.0 + (-a.array()).exp())).matrix();
    };
    for (int t = 0; t < steps_; ++t) {
      const MatrixXd s = step_input(x, steps_, t);
      const MatrixXd& hp = cache.h.back();
      const MatrixXd& cp = cache.c.back();
      MatrixXd ai = s * wxi_.transpose() + hp * whi_.transpose();
      ai.rowwise() += bi_.col(0).transpose();
      MatrixXd af = s * wxf_.transpose() + hp * whf_.transpose();
      af.rowwise() += bf_.col(0).transpose();
      MatrixXd ao = s * wxo_.transpose() + hp * who_.transpose();
      ao.rowwise() += bo_gate_.col(0).transpose();
      MatrixXd ag = s * wxg_.transpose() + hp * whg_.transpose();
      ag.rowwise() += bg_.col(0).transpose();

      const MatrixXd i = sigmoid(std::move(ai));
      const MatrixXd f = sigmoid(std::move(af));
      const MatrixXd o = sigmoid(std::move(ao));
      const MatrixXd g = ag.array().tanh();
      const MatrixXd cnew = (f.array() * cp.array() + i.array() * g.array()).matrix();
      const MatrixXd h = (o.array() * cnew.array().tanh()).matrix();
      cache.i.push_back(i);
      cache.f.push_back(f);
      cache.o.push_back(o);
      cache.g.push_back(g);
      cache.c.push_back(cnew);
      cache.h.push_back(h);
    }
    MatrixXd logits = cache.h.back() * wo_.transpose();
    logits.rowwise() += bo_.col(0).transpose();
    return logits;
  }

  int steps_;
  MatrixXd wxi_, whi_, bi_, wxf_, whf_, bf_, wxo_, who_, bo_gate_;
  MatrixXd wxg_, whg_, bg_, wo_, bo_;
};

// ---------------------------------------------------------------------------
// One-vs-rest least-squares SVM over random Fourier features (RBF kernel
// approximation); trained in closed form.

class SvmNet : public Classifier {
 public:
  SvmNet(int input_dim, int rff_dim, double gamma, std::uint64_t seed) {
    if (gamma <= 0.0) gamma = 1.0 / static_cast<double>(input_dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 * gamma));
    std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979323846);
    rff_w_ = MatrixXd(rff_dim, input_dim);
    for (Eigen::Index j = 0; j < rff_w_.cols(); ++j)
      for (Eigen::Index i = 0; i < rff_w_.rows(); ++i) rff_w_(i, j) = gauss(rng);
    rff_b_ = MatrixXd(rff_dim, 1);
    for (Eigen::Index i = 0; i < rff_dim; ++i) rff_b_(i, 0) = phase(rng);
    weights_ = MatrixXd::Zero(kNumClasses, rff_dim + 1);
  }

  MatrixXd features(const MatrixXd& x) const {
    MatrixXd z = x * rff_w_.transpose();
    z.rowwise() += rff_b_.col(0).transpose();
    z = (z.array().cos() * std::sqrt(2.0 / static_cast<double>(rff_w_.rows())))
            .matrix();
    MatrixXd aug(z.rows(), z.cols() + 1);
    aug << z, MatrixXd::Ones(z.rows(), 1);
    return aug;
  }

  void fit(const MatrixXd& x, const VectorXi& y, double lambda) {
    const MatrixXd z = features(x);
    MatrixXd gram = z.transpose() * z;
    gram.diagonal().array() += lambda;
    const auto solver = gram.ldlt();
    for (int c = 0; c < kNumClasses; ++c) {
      VectorXd target(x.rows());
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        target[i] = (y[i] == c) ? 1.0 : -1.0;
      weights_.row(c) = solver.solve(z.transpose() * target).transpose();
    }
  }

  MatrixXd predict_proba(const MatrixXd& x) const override {
    return softmax_rows(features(x) * weights_.transpose());
  }

  double loss_and_gradients(const MatrixXd&, const VectorXi&,
                            std::vector<MatrixXd>&) const override {
    throw std::logic_error("SvmNet: trained in closed form, no gradients");
  }

  std::vector<MatrixXd*> parameters() override {
    return {&rff_w_, &rff_b_, &weights_};
  }
  std::vector<std::string> parameter_names() const override {
    return {"rff_w", "rff_b", "weights"};
  }
  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<SvmNet>(*this);
  }

 private:
  MatrixXd rff_w_, rff_b_, weights_;
};

double accuracy(const Classifier& net, const MatrixXd& x, const VectorXi& y) {
  const MatrixXd probs = net.predict_proba(x);
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index arg;
    probs.row(i).maxCoeff(&arg);
    if (arg == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

void validate_dataset(const Dataset& dataset) {
  if (dataset.x.rows() == 0)
    throw std::invalid_argument("train: empty dataset");
  if (dataset.x.rows() != dataset.y.size())
    throw std::invalid_argument("train: feature/label count mismatch");
  if (!dataset.x.allFinite())
    throw std::invalid_argument("train: non-finite features");
  std::array<bool, kNumClasses> seen{};
  for (Eigen::Index i = 0; i < dataset.y.size(); ++i) {
    if (dataset.y[i] < 0 || dataset.y[i] >= kNumClasses)
      throw std::invalid_argument("train: label out of range");
    seen[dataset.y[i]] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2)
    throw std::invalid_argument("train: needs at least 2 distinct labels");
}

}  // namespace

std::string family_name(Family family) {
  switch (family) {
    case Family::kSvm: return "svm";
    case Family::kSvmPca: return "svm_pca";
    case Family::kDnn: return "dnn";
    case Family::kRnn: return "rnn";
    case Family::kGru: return "gru";
    case Family::kLstm: return "lstm";
  }
  throw std::invalid_argument("unknown family");
}

Family family_from_name(const std::string& name) {
  for (Family f : all_families())
    if (family_name(f) == name) return f;
  throw std::invalid_argument("unknown family name: " + name);
}

std::vector<Family> all_families() {
  return {Family::kSvm, Family::kSvmPca, Family::kDnn,
          Family::kRnn, Family::kGru,    Family::kLstm};
}

double default_learning_rate(Family family) {
  return family == Family::kDnn ? 0.001 : 0.0005;
}

std::unique_ptr<Classifier> make_classifier(const ModelSpec& spec,
                                            std::uint64_t seed) {
  switch (spec.family) {
    case Family::kDnn:
      return std::make_unique<DnnNet>(spec.input_dim, spec.dnn_hidden, seed);
    case Family::kRnn:
      return std::make_unique<RnnNet>(spec.input_dim, spec.recurrent_hidden,
                                      spec.sequence_steps, seed);
    case Family::kGru:
      return std::make_unique<GruNet>(spec.input_dim, spec.recurrent_hidden,
                                      spec.sequence_steps, seed);
    case Family::kLstm:
      return std::make_unique<LstmNet>(spec.input_dim, spec.recurrent_hidden,
                                       spec.sequence_steps, seed);
    case Family::kSvm:
      return std::make_unique<SvmNet>(spec.input_dim, spec.rff_dim,
                                      spec.rff_gamma, seed);
    case Family::kSvmPca:
      return std::make_unique<SvmNet>(spec.pca_dim, spec.rff_dim,
                                      spec.rff_gamma, seed);
  }
  throw std::invalid_argument("make_classifier: unknown family");
}

void adam_step(std::vector<MatrixXd*>& params,
               const std::vector<MatrixXd>& grads, AdamState& state, int t,
               const TrainConfig& cfg, double learning_rate) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(MatrixXd::Zero(p->rows(), p->cols()));
      state.v.emplace_back(MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!grads[k].allFinite())
      throw std::invalid_argument("adam_step: non-finite gradient");
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
    state.v[k] = (cfg.beta2 * state.v[k].array() +
                  (1.0 - cfg.beta2) * grads[k].array().square())
                     .matrix();
    params[k]->array() -= learning_rate * (state.m[k].array() / bc1) /
                          ((state.v[k].array() / bc2).sqrt() + cfg.epsilon);
  }
}

PcaBasis pca_fit(const MatrixXd& rows, int k) {
  if (k < 1 || k > std::min(rows.rows(), rows.cols()))
    throw std::invalid_argument("pca_fit: k out of range");
  PcaBasis basis;
  basis.mean = rows.colwise().mean();
  const MatrixXd centered = rows.rowwise() - basis.mean.transpose();
  const MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(rows.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);

  basis.components = MatrixXd(rows.cols(), k);
  basis.explained_variance = VectorXd(k);
  // SelfAdjointEigenSolver sorts ascending; take the top-k in reverse.
  for (int j = 0; j < k; ++j) {
    VectorXd v = eig.eigenvectors().col(rows.cols() - 1 - j);
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    basis.components.col(j) = v;
    basis.explained_variance[j] =
        std::max(0.0, eig.eigenvalues()[rows.cols() - 1 - j]);
  }
  return basis;
}

MatrixXd pca_transform(const PcaBasis& basis, const MatrixXd& rows) {
  return (rows.rowwise() - basis.mean.transpose()) * basis.components;
}

MatrixXd pca_reconstruct(const PcaBasis& basis, const MatrixXd& projected) {
  return (projected * basis.components.transpose()).rowwise() +
         basis.mean.transpose();
}

VectorXd TrainedModel::predict_proba(const VectorXd& x) const {
  MatrixXd row(1, x.size());
  row.row(0) = x.transpose();
  return predict_proba(row).row(0).transpose();
}

MatrixXd TrainedModel::predict_proba(const MatrixXd& x) const {
  if (x.cols() != spec.input_dim)
    throw std::invalid_argument("predict_proba: dimension mismatch");
  MatrixXd z = scaled ? features::apply_scaler(scaler, x) : x;
  if (pca) z = pca_transform(*pca, z);
  return net->predict_proba(z);
}

VectorXi TrainedModel::predict(const MatrixXd& x) const {
  const MatrixXd probs = predict_proba(x);
  VectorXi out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index arg;
    probs.row(i).maxCoeff(&arg);
    out[i] = static_cast<int>(arg);
  }
  return out;
}

double TrainedModel::best_val_accuracy() const {
  double best = 0.0;
  for (const auto& r : history) best = std::max(best, r.val_accuracy);
  return best;
}

TrainedModel train(const Dataset& dataset, const ModelSpec& spec,
                   const TrainConfig& cfg) {
  validate_dataset(dataset);

  TrainedModel model;
  model.spec = spec;
  model.spec.input_dim = static_cast<int>(dataset.x.cols());
  model.cfg = cfg;
  model.scaled = cfg.standardize;

  MatrixXd x = dataset.x;
  if (cfg.standardize) {
    model.scaler = features::fit_scaler(x);
    x = features::apply_scaler(model.scaler, x);
  }

  // Stratified 80/20 split. Rows arrive grouped by recording, so each class
  // bucket is cut contiguously: validation frames come from held-out
  // recordings instead of leaking out of training ones.
  std::mt19937_64 rng(cfg.seed ^ 0x5eed0f5a17ULL);
  std::vector<std::vector<Eigen::Index>> by_class(kNumClasses);
  for (Eigen::Index i = 0; i < dataset.y.size(); ++i)
    by_class[dataset.y[i]].push_back(i);
  std::vector<Eigen::Index> train_idx, val_idx;
  for (auto& bucket : by_class) {
    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(cfg.train_fraction * static_cast<double>(bucket.size())));
    for (std::size_t i = 0; i < bucket.size(); ++i)
      (i < n_train ? train_idx : val_idx).push_back(bucket[i]);
  }
  if (val_idx.empty() && !train_idx.empty()) {
    val_idx.push_back(train_idx.back());
    train_idx.pop_back();
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  auto gather = [&](const std::vector<Eigen::Index>& idx, MatrixXd& mx,
                    VectorXi& my) {
    mx.resize(idx.size(), x.cols());
    my.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      mx.row(i) = x.row(idx[i]);
      my[i] = dataset.y[idx[i]];
    }
  };
  MatrixXd train_x, val_x;
  VectorXi train_y, val_y;
  gather(train_idx, train_x, train_y);
  gather(val_idx, val_x, val_y);

  if (!spec.is_gradient_family()) {
    ModelSpec effective = model.spec;
    MatrixXd fit_x = train_x, eval_x = val_x;
    if (spec.family == Family::kSvmPca) {
      const int k = std::min(
          spec.pca_dim,
          static_cast<int>(std::min(train_x.rows(), train_x.cols())));
      effective.pca_dim = k;
      model.pca = pca_fit(train_x, k);
      fit_x = pca_transform(*model.pca, train_x);
      eval_x = pca_transform(*model.pca, val_x);
    }
    auto net = make_classifier(effective, cfg.seed + 1);
    auto* svm = dynamic_cast<SvmNet*>(net.get());
    svm->fit(fit_x, train_y, spec.ls_lambda);
    EpochRecord rec;
    rec.epoch = 1;
    rec.loss = cross_entropy(svm->predict_proba(fit_x), train_y);
    rec.val_accuracy = accuracy(*svm, eval_x, val_y);
    model.history.push_back(rec);
    model.net = std::move(net);
    model.spec = effective;
    return model;
  }

  const double lr = cfg.learning_rate > 0.0 ? cfg.learning_rate
                                            : default_learning_rate(spec.family);
  auto net = make_classifier(model.spec, cfg.seed + 1);
  AdamState adam;
  int adam_t = 0;

  // Pools for stratified batches: each batch keeps at least
  // min_nonzero_fraction of structure-labeled samples when available.
  std::vector<Eigen::Index> nonzero_pool;
  for (Eigen::Index i = 0; i < train_y.size(); ++i)
    if (train_y[i] != 0) nonzero_pool.push_back(i);

  const Eigen::Index n = train_x.rows();
  const int batches =
      static_cast<int>((n + cfg.batch_size - 1) / cfg.batch_size);
  const int min_nonzero = static_cast<int>(
      std::floor(cfg.min_nonzero_fraction * cfg.batch_size));

  std::unique_ptr<Classifier> best;
  double best_val = -1.0;
  int since_improve = 0;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (int bi = 0; bi < batches; ++bi) {
      std::vector<Eigen::Index> batch;
      const Eigen::Index lo = static_cast<Eigen::Index>(bi) * cfg.batch_size;
      const Eigen::Index hi = std::min<Eigen::Index>(lo + cfg.batch_size, n);
      for (Eigen::Index i = lo; i < hi; ++i) batch.push_back(order[i]);

      if (!nonzero_pool.empty()) {
        int have = 0;
        for (auto i : batch)
          if (train_y[i] != 0) ++have;
        std::uniform_int_distribution<std::size_t> pick(0, nonzero_pool.size() - 1);
        for (std::size_t k = 0; k < batch.size() && have < min_nonzero; ++k)
          if (train_y[batch[k]] == 0) {
            batch[k] = nonzero_pool[pick(rng)];
            ++have;
          }
      }

      MatrixXd bx(batch.size(), train_x.cols());
      VectorXi by(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        bx.row(i) = train_x.row(batch[i]);
        by[i] = train_y[batch[i]];
      }
      std::vector<MatrixXd> grads;
      epoch_loss += net->loss_and_gradients(bx, by, grads);
      auto params = net->parameters();
      adam_step(params, grads, adam, ++adam_t, cfg, lr);
    }
    epoch_loss /= static_cast<double>(batches);

    const double val_acc = accuracy(*net, val_x, val_y);
    model.history.push_back({epoch, epoch_loss, val_acc});
    if (val_acc > best_val) {
      best_val = val_acc;
      best = net->clone();
      since_improve = 0;
    } else if (++since_improve >= cfg.patience) {
      break;
    }
  }
  model.net = std::move(best);
  return model;
}

double gradient_check(const ModelSpec& spec, const MatrixXd& x,
                      const VectorXi& y, std::uint64_t seed) {
  auto net = make_classifier(spec, seed);
  std::vector<MatrixXd> analytic;
  net->loss_and_gradients(x, y, analytic);

  const double step = 1e-5;
  double max_rel = 0.0;
  auto params = net->parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    MatrixXd& p = *params[k];
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double orig = p.data()[j];
      std::vector<MatrixXd> unused;
      p.data()[j] = orig + step;
      const double lp = net->loss_and_gradients(x, y, unused);
      p.data()[j] = orig - step;
      const double lm = net->loss_and_gradients(x, y, unused);
      p.data()[j] = orig;
      const double fd = (lp - lm) / (2.0 * step);
      const double a = analytic[k].data()[j];
      const double rel =
          std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

namespace {

nlohmann::json spec_to_json(const ModelSpec& s) {
  return {{"family", family_name(s.family)},
          {"input_dim", s.input_dim},
          {"recurrent_hidden", s.recurrent_hidden},
          {"sequence_steps", s.sequence_steps},
          {"dnn_hidden", s.dnn_hidden},
          {"pca_dim", s.pca_dim},
          {"rff_dim", s.rff_dim},
          {"rff_gamma", s.rff_gamma},
          {"ls_lambda", s.ls_lambda}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.family = family_from_name(j.at("family").get<std::string>());
  s.input_dim = j.at("input_dim").get<int>();
  s.recurrent_hidden = j.at("recurrent_hidden").get<int>();
  s.sequence_steps = j.at("sequence_steps").get<int>();
  s.dnn_hidden = j.at("dnn_hidden").get<std::vector<int>>();
  s.pca_dim = j.at("pca_dim").get<int>();
  s.rff_dim = j.at("rff_dim").get<int>();
  s.rff_gamma = j.at("rff_gamma").get<double>();
  s.ls_lambda = j.at("ls_lambda").get<double>();
  return s;
}

std::vector<double> to_std(const VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), v.size());
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
  nlohmann::json header;
  header["version"] = model.version;
  header["spec"] = spec_to_json(model.spec);
  header["config"] = {{"batch_size", model.cfg.batch_size},
                      {"learning_rate", model.cfg.learning_rate},
                      {"patience", model.cfg.patience},
                      {"max_epochs", model.cfg.max_epochs},
                      {"standardize", model.cfg.standardize},
                      {"seed", model.cfg.seed}};
  header["scaled"] = model.scaled;
  if (model.scaled) {
    header["scaler_mean"] = to_std(model.scaler.mean);
    header["scaler_std"] = to_std(model.scaler.std);
  }
  if (model.pca) {
    header["pca_mean"] = to_std(model.pca->mean);
    header["pca_variance"] = to_std(model.pca->explained_variance);
    header["pca_rows"] = model.pca->components.rows();
    header["pca_cols"] = model.pca->components.cols();
  }
  header["history"] = nlohmann::json::array();
  for (const auto& r : model.history)
    header["history"].push_back({{"epoch", r.epoch},
                                 {"loss", r.loss},
                                 {"val_acc", r.val_accuracy}});
  Classifier* net = model.net.get();
  const auto names = net->parameter_names();
  const auto params = net->parameters();
  header["params"] = nlohmann::json::array();
  for (std::size_t k = 0; k < params.size(); ++k)
    header["params"].push_back({{"name", names[k]},
                                {"rows", params[k]->rows()},
                                {"cols", params[k]->cols()}});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  const std::string hs = header.dump();
  const char magic[8] = {'M', 'S', 'G', 'M', 'O', 'D', 'L', '1'};
  out.write(magic, sizeof(magic));
  const std::uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  if (model.pca)
    out.write(reinterpret_cast<const char*>(model.pca->components.data()),
              static_cast<std::streamsize>(model.pca->components.size() * sizeof(double)));
  for (const auto* p : params)
    out.write(reinterpret_cast<const char*>(p->data()),
              static_cast<std::streamsize>(p->size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing " + path);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != "MSGMODL1")
    throw std::runtime_error("load_model: not a model file: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("load_model: truncated header in " + path);
  const nlohmann::json header = nlohmann::json::parse(hs);

  TrainedModel model;
  model.version = header.at("version").get<std::string>();
  if (model.version != kModelFormatVersion)
    throw std::runtime_error("load_model: incompatible version " + model.version);
  model.spec = spec_from_json(header.at("spec"));
  model.cfg.batch_size = header["config"].at("batch_size").get<int>();
  model.cfg.learning_rate = header["config"].at("learning_rate").get<double>();
  model.cfg.patience = header["config"].at("patience").get<int>();
  model.cfg.max_epochs = header["config"].at("max_epochs").get<int>();
  model.cfg.standardize = header["config"].at("standardize").get<bool>();
  model.cfg.seed = header["config"].at("seed").get<std::uint64_t>();
  model.scaled = header.at("scaled").get<bool>();
  if (model.scaled) {
    model.scaler.mean = from_std(header.at("scaler_mean").get<std::vector<double>>());
    model.scaler.std = from_std(header.at("scaler_std").get<std::vector<double>>());
  }
  for (const auto& r : header.at("history"))
    model.history.push_back({r.at("epoch").get<int>(), r.at("loss").get<double>(),
                             r.at("val_acc").get<double>()});

  auto read_block = [&](double* dst, std::size_t count) {
    in.read(reinterpret_cast<char*>(dst),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("load_model: truncated data in " + path);
  };

  if (header.contains("pca_mean")) {
    PcaBasis basis;
    basis.mean = from_std(header.at("pca_mean").get<std::vector<double>>());
    basis.explained_variance =
        from_std(header.at("pca_variance").get<std::vector<double>>());
    basis.components.resize(header.at("pca_rows").get<Eigen::Index>(),
                            header.at("pca_cols").get<Eigen::Index>());
    read_block(basis.components.data(), basis.components.size());
    model.pca = std::move(basis);
  }

  auto net = make_classifier(model.spec, 0);
  const auto names = net->parameter_names();
  auto params = net->parameters();
  const auto& jparams = header.at("params");
  if (jparams.size() != params.size())
    throw std::runtime_error("load_model: parameter table mismatch in " + path);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (jparams[k].at("name").get<std::string>() != names[k] ||
        jparams[k].at("rows").get<Eigen::Index>() != params[k]->rows() ||
        jparams[k].at("cols").get<Eigen::Index>() != params[k]->cols())
      throw std::runtime_error("load_model: parameter shape mismatch in " + path);
    read_block(params[k]->data(), params[k]->size());
  }
  model.net = std::move(net);
  return model;
}

void write_history_csv(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "epoch,loss,val_acc\n";
  for (const auto& r : model.history)
    out << r.epoch << "," << r.loss << "," << r.val_accuracy << "\n";
}

}  // namespace magsig::models
