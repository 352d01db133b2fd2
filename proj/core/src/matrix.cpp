// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "flexrank/errors.hpp"

namespace flexrank {

namespace {

std::string shape_of(const Matrix& m)
{
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": " + shape_of(a) + " vs " + shape_of(b));
    }
}

constexpr double kResidualFloor = 1e-10;

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data))
{
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size())
{
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("Matrix: ragged initializer");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

std::vector<double> Matrix::column(std::size_t c) const
{
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        out[r] = (*this)(r, c);
    }
    return out;
}

Matrix Matrix::transposed() const
{
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

void Matrix::append_column(std::span<const double> values)
{
    if (values.size() != rows_) {
        throw ShapeError("append_column: " + std::to_string(values.size()) + " values for " +
                         std::to_string(rows_) + " rows");
    }
    std::vector<double> next;
    next.reserve(rows_ * (cols_ + 1));
    for (std::size_t r = 0; r < rows_; ++r) {
        auto src = row(r);
        next.insert(next.end(), src.begin(), src.end());
        next.push_back(values[r]);
    }
    data_ = std::move(next);
    ++cols_;
}

void Matrix::append_row(std::span<const double> values)
{
    if (values.size() != cols_) {
        throw ShapeError("append_row: " + std::to_string(values.size()) + " values for " +
                         std::to_string(cols_) + " columns");
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

void Matrix::erase_column(std::size_t c)
{
    if (c >= cols_) {
        throw ShapeError("erase_column: index out of range");
    }
    std::vector<double> next;
    next.reserve(rows_ * (cols_ - 1));
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = 0; k < cols_; ++k) {
            if (k != c) {
                next.push_back((*this)(r, k));
            }
        }
    }
    data_ = std::move(next);
    --cols_;
}

void Matrix::erase_row(std::size_t r)
{
    if (r >= rows_) {
        throw ShapeError("erase_row: index out of range");
    }
    const auto first = data_.begin() + static_cast<std::ptrdiff_t>(r * cols_);
    data_.erase(first, first + static_cast<std::ptrdiff_t>(cols_));
    --rows_;
}

bool Matrix::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_of(a) + " * " + shape_of(b));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b)
{
    require_same_shape(a, b, "add");
    Matrix out = a;
    auto dst = out.data();
    auto src = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b)
{
    require_same_shape(a, b, "subtract");
    Matrix out = a;
    auto dst = out.data();
    auto src = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] -= src[i];
    }
    return out;
}

Matrix scaled(const Matrix& m, double factor)
{
    Matrix out = m;
    for (double& v : out.data()) {
        v *= factor;
    }
    return out;
}

double frobenius_norm(const Matrix& m)
{
    double acc = 0.0;
    for (double v : m.data()) {
        acc += v * v;
    }
    return std::sqrt(acc);
}

double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std, SeededRng& rng)
{
    if (!(std > 0.0) || !std::isfinite(std)) {
        throw ParameterError("gaussian_matrix: std must be positive, got " + format_double(std));
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = std * rng.normal();
    }
    return m;
}

std::vector<double> gaussian_vector(std::size_t n, double std, SeededRng& rng)
{
    Matrix m = gaussian_matrix(n, 1, std, rng);
    return {m.data().begin(), m.data().end()};
}

std::vector<double> gram_schmidt_extend(const Matrix& basis, std::span<const double> candidate,
                                        SeededRng& rng, int max_retries)
{
    const std::size_t n = basis.rows();
    if (candidate.size() != n) {
        throw ShapeError("gram_schmidt_extend: candidate length " + std::to_string(candidate.size()) +
                         " for basis with " + std::to_string(n) + " rows");
    }
    if (basis.cols() >= n) {
        throw RankFullError("gram_schmidt_extend: basis has " + std::to_string(basis.cols()) +
                            " columns in R^" + std::to_string(n));
    }

    // Orthonormal basis for the span of the existing columns; the columns
    // themselves need not be orthogonal. Dependent columns are dropped.
    std::vector<std::vector<double>> columns;
    columns.reserve(basis.cols());
    for (std::size_t c = 0; c < basis.cols(); ++c) {
        auto col = basis.column(c);
        const double original = norm2(col);
        if (!(original > 0.0)) {
            continue;
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : columns) {
                const double coeff = dot(q, col);
                for (std::size_t i = 0; i < n; ++i) {
                    col[i] -= coeff * q[i];
                }
            }
        }
        const double left = norm2(col);
        if (left > 1e-10 * original) {
            for (double& x : col) {
                x /= left;
            }
            columns.push_back(std::move(col));
        }
    }

    std::vector<double> v(candidate.begin(), candidate.end());
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        const double start = norm2(v);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& col : columns) {
                const double coeff = dot(col, v);
                for (std::size_t i = 0; i < n; ++i) {
                    v[i] -= coeff * col[i];
                }
            }
        }
        const double residual = norm2(v);
        // Cancellation below this relative level leaves a direction dominated by rounding.
        if (residual >= kResidualFloor && residual > 1e-8 * start && std::isfinite(residual)) {
            for (double& x : v) {
                x /= residual;
            }
            return v;
        }
        v = gaussian_vector(n, 1.0, rng);
    }
    throw DegenerateInputError("gram_schmidt_extend: no usable direction after " +
                               std::to_string(max_retries) + " resamples");
}

Spectrum::Spectrum(std::vector<double> values) : values_(std::move(values))
{
    if (values_.empty()) {
        throw ParameterError("Spectrum: needs at least one value");
    }
    for (double v : values_) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ParameterError("Spectrum: singular values must be finite and non-negative, got " +
                                 format_double(v));
        }
    }
}

std::string format_double(double value)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) {
        throw ParseError("format_double: conversion failed");
    }
    return {buf, end};
}

double parse_double(std::string_view text)
{
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
        text.remove_prefix(1);
    }
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
        text.remove_suffix(1);
    }
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError("not a number: '" + std::string(text) + "'");
    }
    if (!std::isfinite(value)) {
        throw ParseError("non-finite value: '" + std::string(text) + "'");
    }
    return value;
}

void write_csv(std::ostream& out, const Matrix& m)
{
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c > 0) {
                out << ',';
            }
            out << format_double(m(r, c));
        }
        out << '\n';
    }
}

std::string to_csv(const Matrix& m)
{
    std::ostringstream out;
    write_csv(out, m);
    return out.str();
}

std::vector<double> parse_csv_row(std::string_view line)
{
    std::vector<double> values;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        values.push_back(parse_double(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return values;
}

Matrix read_csv(std::istream& in, std::size_t rows)
{
    std::vector<double> data;
    std::size_t cols = 0;
    std::size_t read = 0;
    std::string line;
    while ((rows == 0 || read < rows) && std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            if (rows == 0) {
                continue;
            }
            throw ParseError("read_csv: empty line at row " + std::to_string(read));
        }
        auto values = parse_csv_row(line);
        if (read == 0) {
            cols = values.size();
        } else if (values.size() != cols) {
            throw ParseError("read_csv: row " + std::to_string(read) + " has " +
                             std::to_string(values.size()) + " cells, expected " + std::to_string(cols));
        }
        data.insert(data.end(), values.begin(), values.end());
        ++read;
    }
    if (read == 0) {
        throw ParseError("read_csv: no rows");
    }
    if (rows != 0 && read != rows) {
        throw ParseError("read_csv: expected " + std::to_string(rows) + " rows, got " + std::to_string(read));
    }
    return Matrix(read, cols, std::move(data));
}

} // namespace flexrank
