// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "flexrank/rng.hpp"

namespace flexrank {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double> column(std::size_t c) const;

    Matrix transposed() const;

    void append_column(std::span<const double> values);
    void append_row(std::span<const double> values);
    void erase_column(std::size_t c);
    void erase_row(std::size_t r);

    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a * b. Accumulates each entry in increasing inner index starting from +0.0.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& m, double factor);

double frobenius_norm(const Matrix& m);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

/// i.i.d. N(0, std^2) entries, drawn in row-major order.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std, SeededRng& rng);
std::vector<double> gaussian_vector(std::size_t n, double std, SeededRng& rng);

/// Unit vector orthogonal to every column of `basis`, starting from `candidate`.
///
/// The basis columns are orthonormalized first (zero and dependent columns
/// are dropped), then the candidate is projected out twice.
/// If the residual of the candidate is shorter than 1e-10 a fresh standard
/// Gaussian candidate is drawn, up to `max_retries` times.
std::vector<double> gram_schmidt_extend(const Matrix& basis, std::span<const double> candidate,
                                        SeededRng& rng, int max_retries = 16);

/// Non-negative singular values lambda_1..lambda_r, length >= 1.
class Spectrum {
public:
    explicit Spectrum(std::vector<double> values);

    std::span<const double> values() const { return values_; }
    std::size_t size() const { return values_.size(); }

private:
    std::vector<double> values_;
};

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

/// One matrix row per line, comma-separated.
void write_csv(std::ostream& out, const Matrix& m);
std::string to_csv(const Matrix& m);
/// Reads exactly `rows` lines, or every remaining non-empty line when rows == 0.
Matrix read_csv(std::istream& in, std::size_t rows = 0);
std::vector<double> parse_csv_row(std::string_view line);

} // namespace flexrank
