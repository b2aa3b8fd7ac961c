#include "ganselect/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ganselect/error.hpp"

namespace ganselect {

std::string to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::gaussian: return "gaussian";
        case DatasetKind::gaussian_ring: return "gaussian_ring";
        case DatasetKind::csv: return "csv";
    }
    return "?";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "gaussian") return DatasetKind::gaussian;
    if (s == "gaussian_ring") return DatasetKind::gaussian_ring;
    if (s == "csv") return DatasetKind::csv;
    throw ConfigError("unknown dataset kind '" + s + "'");
}

Tensor make_dataset(const DatasetSpec& spec) {
    if (spec.kind == DatasetKind::csv) return read_csv(spec.path, spec.dim, spec.csv_header);
    if (spec.dim == 0 || spec.n == 0) throw ConfigError("dataset: dim and n must be positive");
    Rng rng(spec.seed);
    Tensor out(Shape{spec.n, spec.dim});
    if (spec.kind == DatasetKind::gaussian) {
        for (double& v : out.data()) v = rng.normal();
        return out;
    }
    if (spec.dim != 2) throw ConfigError("dataset: gaussian_ring requires dim == 2");
    if (spec.n_modes == 0) throw ConfigError("dataset: gaussian_ring requires n_modes > 0");
    const double two_pi = 6.283185307179586476925286766559;
    for (std::size_t r = 0; r < spec.n; ++r) {
        const std::size_t mode = rng.below(spec.n_modes);
        const double angle = two_pi * static_cast<double>(mode) / static_cast<double>(spec.n_modes);
        out.at(r, 0) = spec.radius * std::cos(angle) + spec.mode_std * rng.normal();
        out.at(r, 1) = spec.radius * std::sin(angle) + spec.mode_std * rng.normal();
    }
    return out;
}

GaussianMoments target_moments(const DatasetSpec& spec, const Tensor& data) {
    const std::size_t d = data.cols();
    GaussianMoments m{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0)};
    if (spec.kind == DatasetKind::gaussian) {
        for (std::size_t i = 0; i < d; ++i) m.cov[i * d + i] = 1.0;
        return m;
    }
    const std::size_t n = data.rows();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < d; ++i) m.mean[i] += data.at(r, i) / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                m.cov[i * d + j] +=
                    (data.at(r, i) - m.mean[i]) * (data.at(r, j) - m.mean[j]) / static_cast<double>(n - 1);
    return m;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_csv(const std::filesystem::path& path, const Tensor& data) {
    std::ofstream f(path);
    if (!f) throw IngestionError("csv: cannot open " + path.string() + " for writing", 0);
    for (std::size_t r = 0; r < data.rows(); ++r) {
        for (std::size_t c = 0; c < data.cols(); ++c) {
            if (c) f << ',';
            f << format_double(data.at(r, c));
        }
        f << '\n';
    }
}

Tensor read_csv(const std::filesystem::path& path, std::size_t expected_dim, bool header) {
    std::ifstream f(path);
    if (!f) throw IngestionError("csv: cannot open " + path.string(), 0);
    std::vector<double> values;
    std::size_t dim = expected_dim;
    std::size_t rows = 0;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (header && line_no == 1) continue;
        if (line.empty()) continue;
        std::size_t fields = 0;
        std::size_t start = 0;
        while (true) {
            const std::size_t end = std::min(line.find(',', start), line.size());
            std::string_view field(line.data() + start, end - start);
            while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
            while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
            double v = 0.0;
            auto res = std::from_chars(field.data(), field.data() + field.size(), v);
            if (res.ec != std::errc() || res.ptr != field.data() + field.size())
                throw IngestionError("csv: row " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "'",
                                     line_no);
            values.push_back(v);
            ++fields;
            if (end == line.size()) break;
            start = end + 1;
        }
        if (dim == 0) dim = fields;
        if (fields != dim)
            throw IngestionError("csv: row " + std::to_string(line_no) + " has " + std::to_string(fields) +
                                     " columns, expected " + std::to_string(dim),
                                 line_no);
        ++rows;
    }
    if (rows == 0) throw IngestionError("csv: " + path.string() + " contains no rows", 0);
    return Tensor(Shape{rows, dim}, std::move(values));
}

BatchSampler::BatchSampler(const Tensor& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), rows_(data.rows()), batch_size_(batch_size), rng_(seed), perm_(data.rows()) {
    if (batch_size == 0 || batch_size > rows_)
        throw ConfigError("sampler: batch size " + std::to_string(batch_size) + " must lie in [1, " +
                          std::to_string(rows_) + "]");
}

void BatchSampler::reshuffle() {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    for (std::size_t i = rows_; i > 1; --i) std::swap(perm_[i - 1], perm_[rng_.below(i)]);
    cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next_indices() {
    if (!started_) {
        reshuffle();
        started_ = true;
    } else if (cursor_ + batch_size_ > rows_) {
        reshuffle();
        ++epoch_;
    }
    std::vector<std::size_t> idx(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 perm_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
    cursor_ += batch_size_;
    return idx;
}

Tensor BatchSampler::next() {
    const auto idx = next_indices();
    const std::size_t d = data_->cols();
    Tensor out(Shape{batch_size_, d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) out.at(i, c) = data_->at(idx[i], c);
    return out;
}

}  // namespace ganselect
