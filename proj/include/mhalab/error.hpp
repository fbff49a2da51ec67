#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhalab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class RankDeficient : public Error {
public:
    RankDeficient(std::size_t rank, std::size_t cols)
        : Error("rank deficient matrix: detected rank " + std::to_string(rank) + " of " +
                std::to_string(cols) + " columns"),
          rank_(rank) {}
    std::size_t rank() const noexcept { return rank_; }

private:
    std::size_t rank_;
};

class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class UnsupportedFamily : public Error {
public:
    explicit UnsupportedFamily(const std::string& name)
        : Error("unsupported regression family '" + name + "'") {}
};

class EmptyData : public Error {
public:
    EmptyData() : Error("empty dataset") {}
};

class DegenerateKernel : public Error {
public:
    using Error::Error;
};

class NeedsTwoHeads : public Error {
public:
    NeedsTwoHeads() : Error("operation needs at least two heads") {}
};

class Infeasible : public Error {
public:
    using Error::Error;
};

class OptimizationStalled : public Error {
public:
    OptimizationStalled(const std::string& what, std::vector<double> trace)
        : Error(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

class ReplicateFailure : public Error {
public:
    ReplicateFailure(std::size_t replicate, std::size_t head, std::size_t query)
        : Error("non-finite head output at replicate " + std::to_string(replicate) + ", head " +
                std::to_string(head) + ", query " + std::to_string(query)),
          replicate_(replicate), head_(head), query_(query) {}
    std::size_t replicate() const noexcept { return replicate_; }
    std::size_t head() const noexcept { return head_; }
    std::size_t query() const noexcept { return query_; }

private:
    std::size_t replicate_, head_, query_;
};

class DensityTooSmall : public Error {
public:
    explicit DensityTooSmall(double density)
        : Error("projected density " + std::to_string(density) + " below 1e-8 at query"),
          density_(density) {}
    double density() const noexcept { return density_; }

private:
    double density_;
};

class MissingDensity : public Error {
public:
    using Error::Error;
};

class EmptySweep : public Error {
public:
    EmptySweep() : Error("every allocation of the sweep was skipped") {}
};

} // namespace mhalab
