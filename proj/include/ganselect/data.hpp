#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ganselect/rng.hpp"
#include "ganselect/tensor.hpp"

namespace ganselect {

enum class DatasetKind { gaussian, gaussian_ring, csv };

std::string to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::gaussian;
    std::size_t dim = 2;
    std::size_t n = 2000;
    // gaussian_ring
    std::size_t n_modes = 8;
    double radius = 2.0;
    double mode_std = 0.05;
    // csv
    std::string path;
    bool csv_header = false;
    std::uint64_t seed = 0;

    friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

/// Rows are samples, [n, dim]. Deterministic per seed.
Tensor make_dataset(const DatasetSpec& spec);

/// Mean and covariance the dataset was drawn from, when known in closed form.
struct GaussianMoments {
    std::vector<double> mean;
    std::vector<double> cov;  // dim x dim, row-major
};
GaussianMoments target_moments(const DatasetSpec& spec, const Tensor& data);

/// Headerless decimal CSV; values are written in shortest round-trip form.
void write_csv(const std::filesystem::path& path, const Tensor& data);
/// Reads [rows, expected_dim]; expected_dim == 0 infers it from the first row.
Tensor read_csv(const std::filesystem::path& path, std::size_t expected_dim, bool header = false);

/// Shuffled-epoch minibatches: every epoch is a fresh uniform permutation,
/// consecutive slices form batches, and the trailing partial batch is dropped.
class BatchSampler {
public:
    BatchSampler(const Tensor& data, std::size_t batch_size, std::uint64_t seed);

    Tensor next();
    /// Row indices of the next batch (advances the stream like next()).
    std::vector<std::size_t> next_indices();

    std::size_t batches_per_epoch() const noexcept { return rows_ / batch_size_; }
    /// Number of completed permutations.
    std::size_t epoch() const noexcept { return epoch_; }

private:
    void reshuffle();

    const Tensor* data_;
    std::size_t rows_;
    std::size_t batch_size_;
    Rng rng_;
    std::vector<std::size_t> perm_;
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
    bool started_ = false;
};

std::string format_double(double v);

}  // namespace ganselect
