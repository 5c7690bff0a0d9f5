#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace druformer {

// Dense n-dimensional tensor of 64-bit floats, row-major.
// Copying a Tensor copies the handle, not the storage.
struct TensorImpl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    size_t numel() const { return impl_->data.size(); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    // Ensures the grad buffer exists (zero-filled) and returns it.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    bool has_grad() const { return !impl_->grad.empty(); }
    void zero_grad();

    TensorImpl* impl() const { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

// Records the backward rules of one forward computation in execution order.
// Every operation's inputs are produced before it runs, so a single reverse
// sweep propagates gradients correctly and visits each node exactly once.
// The innermost live Tape is the active one; ops record onto it when any
// input requires grad. A Tape is single-writer: one training step owns it.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();
    static bool recording();

    void record(const char* op_name, Tensor output, std::function<void()> backward_fn);

    // Seeds d(loss)/d(loss) = 1 and runs the reverse sweep. Gradients of
    // intermediate (tape-produced) tensors are reset first; leaf gradients
    // accumulate across repeated calls. Throws on a non-scalar loss.
    void backward(const Tensor& loss);

    size_t size() const { return nodes_.size(); }

    // Test hook: a node whose op name matches is skipped during the sweep,
    // simulating a broken backward rule for gradcheck negative controls.
    static void set_corrupted_op(std::string name);
    static void clear_corrupted_op();

private:
    struct Node {
        const char* op_name;
        Tensor output;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;
    Tape* prev_;
};

// Disables recording within the current scope.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape* saved_;
};

size_t shape_numel(const std::vector<int>& shape);

class NonFiniteError : public std::runtime_error {
public:
    explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

// Throws NonFiniteError if any value is NaN or infinite; every forward op
// calls this on its output so divergence surfaces at the op that produced it.
void check_finite(const char* op_name, const std::vector<double>& values);

// Seedable generator behind all stochastic draws (init, sampling, shuffling).
// Normal draws use Box–Muller with no cached spare so the full state is the
// engine state, which serializes exactly for bit-identical resume.
class RngService {
public:
    explicit RngService(uint64_t seed);

    double uniform();  // [0, 1)
    double uniform(double lo, double hi);
    double normal();
    int uniform_int(int n);  // [0, n)
    uint64_t next_u64();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    // Independent stream for scene `id` under a master seed.
    static RngService for_stream(uint64_t master_seed, uint64_t id);

    std::string serialize() const;
    void deserialize(const std::string& state);

private:
    std::mt19937_64 engine_;
};

}  // namespace druformer
