#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bmqa/rng.hpp"

namespace bmqa {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
size_t shape_numel(const Shape& s);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Redirects gradient accumulation for a fixed set of shared leaf nodes
// (model parameters) into private buffers. Per-sample backward passes can
// then run concurrently and be merged in sample order, which keeps the
// floating-point accumulation order independent of the thread count.
class GradArena {
  public:
    explicit GradArena(const std::unordered_set<const Node*>* shared) : shared_(shared) {}

    bool owns(const Node* n) const { return shared_ && shared_->count(n) > 0; }
    std::vector<double>& slot(const Node* n, size_t size);

    // adds every collected slot into the nodes' own grad buffers
    void merge_into_nodes();

  private:
    const std::unordered_set<const Node*>* shared_;
    std::unordered_map<const Node*, std::vector<double>> slots_;
    std::vector<const Node*> order_;
};

struct BackwardCtx {
    GradArena* arena = nullptr;
    std::vector<double>& grad_of(Node& n);
};

// One value in the differentiation graph. Operation results keep
// shared_ptr references to their operands, so operands always precede
// their consumers and a reverse postorder walk is a valid backward order.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on first use
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&, BackwardCtx&)> backward;

    size_t numel() const { return value.size(); }
    std::vector<double>& grad_buffer();
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor uniform(Rng& rng, Shape shape, double lo, double hi, bool requires_grad = false);
    static Tensor normal(Rng& rng, Shape shape, double mean, double stddev, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    size_t numel() const { return node_->value.size(); }
    int rows() const;
    int cols() const;

    std::vector<double>& data() { return node_->value; }
    const std::vector<double>& data() const { return node_->value; }
    double value() const;            // scalar tensors only
    double at(int i) const { return node_->value[static_cast<size_t>(i)]; }
    double at(int r, int c) const { return node_->value[static_cast<size_t>(r) * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    std::vector<double>& grad() { return node_->grad_buffer(); }
    const std::vector<double>& grad() const { return node_->grad_buffer(); }
    void zero_grad();

    // throws ContractError naming the first offending coordinate
    void assert_finite(const std::string& context) const;

    // Reverse-mode sweep from a scalar loss. Gradients accumulate into
    // requires_grad leaves; the caller zeroes them between steps.
    void backward(GradArena* arena = nullptr) const;
    // same sweep seeded with an explicit output gradient (chain staging)
    void backward_seeded(const std::vector<double>& seed, GradArena* arena = nullptr) const;

    Node* node() const { return node_.get(); }
    const NodePtr& node_ptr() const { return node_; }

    static Tensor wrap(NodePtr n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

  private:
    NodePtr node_;
};

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& x, const Tensor& bias);  // [N,d] + [d]
Tensor mul_rowvec(const Tensor& x, const Tensor& s);     // [N,d] * [d]

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]@[k,n]; rank-1 lhs ok
Tensor transpose(const Tensor& a);

// ---- nonlinearities & normalization ----
enum class Activation { relu, gelu };
Tensor activate(const Tensor& x, Activation kind);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form x*Phi(x)

// softmax of x/sqrt(d) over the trailing dimension
Tensor softmax_scaled(const Tensor& x, int d);
// invalid key positions (mask==0) get zero probability
Tensor softmax_scaled_masked(const Tensor& x, int d, const std::vector<uint8_t>& key_mask);
// row i may attend to keys j <= i
Tensor softmax_scaled_causal(const Tensor& x, int d);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor cosine_similarity(const Tensor& u, const Tensor& v);  // scalar

// ---- reductions & reshaping ----
Tensor sum(const Tensor& x);
Tensor mean_rows(const Tensor& x, int n_valid);  // mean of first n_valid rows -> [d]
Tensor concat(const Tensor& a, const Tensor& b);  // rank-1 vectors
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor take_diag(const Tensor& m);
Tensor zero_rows_from(const Tensor& x, int first_zeroed);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

// ln(max(x, floor)); clamped coordinates get zero gradient and bump the counter
Tensor log_clamped(const Tensor& x, double floor, std::atomic<long>* clamp_counter = nullptr);

// sum over rows of (logsumexp(row) - row[target]); backward is softmax - onehot
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// ---- image-grid helpers (tensors laid out [h*w, c]) ----
Tensor im2col3x3(const Tensor& x, int h, int w);   // -> [h*w, 9c], zero padded
Tensor avgpool2x2(const Tensor& x, int h, int w);  // -> [h/2*w/2, c]

// ---- verification ----
// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x, double h);
double grad_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h);

// raw kernels reused by the ops (exposed for the acceptance oracles)
void matmul_kernel(const double* a, const double* b, double* c, int m, int k, int n);

}  // namespace bmqa
