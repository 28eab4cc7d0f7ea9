#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "fabsim/mesh.hpp"

namespace fabsim {

// Fully connected tanh network mapping normalized (x, y, t) to a normalized
// in-plane displacement (u_x, u_y). The last layer is affine.
class MlpNet {
public:
    MlpNet() = default;
    // All weights and biases zero.
    explicit MlpNet(std::vector<int> widths);
    // Glorot-normal weights, zero biases. With zero_output the last layer
    // starts at zero so the untrained field is identically zero.
    static MlpNet glorot(std::vector<int> widths, std::uint64_t seed, bool zero_output = true);

    const std::vector<int>& widths() const { return widths_; }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;

    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);
    bool all_finite() const;

    std::vector<Eigen::MatrixXd> weights;  // weights[l] is widths[l+1] x widths[l]
    std::vector<Eigen::VectorXd> biases;

private:
    std::vector<int> widths_;
};

// Default shape: 7 affine layers, 3 -> 50 x 6 -> 2.
std::vector<int> default_widths();

// Derivative channels carried alongside the value through the network.
enum JetChannel : int { kValue = 0, kDx, kDy, kDt, kDxx, kDxy, kDyy, kDtt };
inline constexpr int kJetChannels = 8;

// Activations of a batched forward pass. Columns are grouped by channel:
// channel c of sample i lives in column c * samples + i.
struct ForwardCache {
    int channels = 1;
    Eigen::Index samples = 0;
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
    Eigen::MatrixXd output;               // 2 x (channels * samples)
};

// inputs is 3 x samples, normalized coordinates. With jets the output also
// holds the first derivatives in (x, y, t) and the second derivatives xx, xy,
// yy, tt with respect to the normalized inputs.
ForwardCache forward(const MlpNet& net, const Eigen::MatrixXd& inputs, bool jets);

struct MlpGradient {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    Eigen::VectorXd flatten() const;
};

MlpGradient zero_gradient(const MlpNet& net);

// Accumulates d loss / d parameters into grad given d loss / d output
// (same layout as cache.output).
void backward(const MlpNet& net, const ForwardCache& cache, const Eigen::MatrixXd& d_output, MlpGradient& grad);

// Plain forward pass at one normalized point.
Vec2 net_eval(const MlpNet& net, double x, double y, double t);

}  // namespace fabsim
