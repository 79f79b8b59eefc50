#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecodrive {

namespace detail {

inline void check_axis(std::span<const double> axis, const char* what)
{
    if (axis.size() < 2) {
        throw std::invalid_argument(std::string{what} + ": need at least 2 breakpoints");
    }
    for (std::size_t i = 1; i < axis.size(); ++i) {
        if (!(axis[i] > axis[i - 1])) {
            throw std::invalid_argument(std::string{what} + ": breakpoints must be strictly ascending");
        }
    }
}

struct Bracket {
    std::size_t lo;
    double frac;
};

// Clamps q into the axis range, then locates the interval containing it.
inline Bracket bracket(std::span<const double> axis, double q)
{
    if (q <= axis.front()) {
        return {0, 0.0};
    }
    if (q >= axis.back()) {
        return {axis.size() - 2, 1.0};
    }
    const auto it = std::upper_bound(axis.begin(), axis.end(), q);
    const auto hi = static_cast<std::size_t>(it - axis.begin());
    const std::size_t lo = hi - 1;
    return {lo, (q - axis[lo]) / (axis[hi] - axis[lo])};
}

}  // namespace detail

/// Piecewise-linear map y(x); queries outside the breakpoints clamp to the edge value.
class LookupTable1D {
public:
    LookupTable1D() = default;

    LookupTable1D(std::vector<double> breakpoints, std::vector<double> values)
        : breakpoints_(std::move(breakpoints)), values_(std::move(values))
    {
        detail::check_axis(breakpoints_, "LookupTable1D");
        if (values_.size() != breakpoints_.size()) {
            throw std::invalid_argument("LookupTable1D: values and breakpoints differ in length");
        }
    }

    double operator()(double q) const
    {
        const auto [lo, f] = detail::bracket(breakpoints_, q);
        return values_[lo] + f * (values_[lo + 1] - values_[lo]);
    }

    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<double>& values() const { return values_; }

    bool operator==(const LookupTable1D&) const = default;

private:
    std::vector<double> breakpoints_;
    std::vector<double> values_;
};

/// Bilinear map z(row, col) over a rectangular grid stored row-major, edge-clamped.
class LookupTable2D {
public:
    LookupTable2D() = default;

    LookupTable2D(std::vector<double> rows, std::vector<double> cols, std::vector<std::vector<double>> grid)
        : rows_(std::move(rows)), cols_(std::move(cols))
    {
        detail::check_axis(rows_, "LookupTable2D rows");
        detail::check_axis(cols_, "LookupTable2D cols");
        if (grid.size() != rows_.size()) {
            throw std::invalid_argument("LookupTable2D: grid row count does not match row breakpoints");
        }
        grid_.reserve(rows_.size() * cols_.size());
        for (const auto& row : grid) {
            if (row.size() != cols_.size()) {
                throw std::invalid_argument("LookupTable2D: grid column count does not match column breakpoints");
            }
            grid_.insert(grid_.end(), row.begin(), row.end());
        }
    }

    double operator()(double r, double c) const
    {
        const auto [i, fr] = detail::bracket(rows_, r);
        const auto [j, fc] = detail::bracket(cols_, c);
        const double z00 = at(i, j);
        const double z01 = at(i, j + 1);
        const double z10 = at(i + 1, j);
        const double z11 = at(i + 1, j + 1);
        const double lo = z00 + fc * (z01 - z00);
        const double hi = z10 + fc * (z11 - z10);
        return lo + fr * (hi - lo);
    }

    double at(std::size_t i, std::size_t j) const { return grid_[i * cols_.size() + j]; }

    const std::vector<double>& rows() const { return rows_; }
    const std::vector<double>& cols() const { return cols_; }
    const std::vector<double>& flat_values() const { return grid_; }

    bool operator==(const LookupTable2D&) const = default;

private:
    std::vector<double> rows_;
    std::vector<double> cols_;
    std::vector<double> grid_;
};

}  // namespace ecodrive
