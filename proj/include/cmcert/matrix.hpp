#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "error.hpp"
#include "interval.hpp"
#include "rational.hpp"

namespace cmcert {

/// Dense row-major matrix.
template <class T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, const T& fill = T(0)) : r_(rows), c_(cols), a_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<T>> rows) {
        r_ = rows.size();
        c_ = r_ ? rows.begin()->size() : 0;
        for (const auto& row : rows) {
            require(row.size() == c_, "ragged matrix literal");
            a_.insert(a_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

    std::size_t rows() const { return r_; }
    std::size_t cols() const { return c_; }
    bool square() const { return r_ == c_; }
    T& operator()(std::size_t i, std::size_t j) { return a_[i * c_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return a_[i * c_ + j]; }

    Matrix transpose() const {
        Matrix t(c_, r_);
        for (std::size_t i = 0; i < r_; ++i)
            for (std::size_t j = 0; j < c_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
        require(r0 + nr <= r_ && c0 + nc <= c_, "matrix block out of range");
        Matrix b(nr, nc);
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j) b(i, j) = (*this)(r0 + i, c0 + j);
        return b;
    }

    std::vector<T> column(std::size_t j) const {
        std::vector<T> v(r_);
        for (std::size_t i = 0; i < r_; ++i) v[i] = (*this)(i, j);
        return v;
    }

    friend Matrix operator+(const Matrix& a, const Matrix& b) {
        require(a.r_ == b.r_ && a.c_ == b.c_, "matrix size mismatch");
        Matrix out = a;
        for (std::size_t i = 0; i < out.a_.size(); ++i) out.a_[i] += b.a_[i];
        return out;
    }
    friend Matrix operator-(const Matrix& a, const Matrix& b) {
        require(a.r_ == b.r_ && a.c_ == b.c_, "matrix size mismatch");
        Matrix out = a;
        for (std::size_t i = 0; i < out.a_.size(); ++i) out.a_[i] -= b.a_[i];
        return out;
    }
    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        require(a.c_ == b.r_, "matrix product size mismatch");
        Matrix out(a.r_, b.c_);
        for (std::size_t i = 0; i < a.r_; ++i)
            for (std::size_t k = 0; k < a.c_; ++k) {
                if (a(i, k) == T(0)) continue;
                for (std::size_t j = 0; j < b.c_; ++j) out(i, j) += a(i, k) * b(k, j);
            }
        return out;
    }
    friend Matrix operator*(const T& s, const Matrix& a) {
        Matrix out = a;
        for (auto& v : out.a_) v *= s;
        return out;
    }
    friend std::vector<T> operator*(const Matrix& a, const std::vector<T>& v) {
        require(a.c_ == v.size(), "matrix-vector size mismatch");
        std::vector<T> out(a.r_, T(0));
        for (std::size_t i = 0; i < a.r_; ++i)
            for (std::size_t j = 0; j < a.c_; ++j) out[i] += a(i, j) * v[j];
        return out;
    }
    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.r_ == b.r_ && a.c_ == b.c_ && a.a_ == b.a_;
    }

private:
    std::size_t r_ = 0, c_ = 0;
    std::vector<T> a_;
};

using RMatrix = Matrix<Rational>;
using RVector = std::vector<Rational>;

/// Reduced row echelon form; returns pivot columns.
inline std::vector<std::size_t> rref(RMatrix& m) {
    std::vector<std::size_t> pivots;
    std::size_t row = 0;
    for (std::size_t col = 0; col < m.cols() && row < m.rows(); ++col) {
        std::size_t p = row;
        while (p < m.rows() && m(p, col) == 0) ++p;
        if (p == m.rows()) continue;
        for (std::size_t j = 0; j < m.cols(); ++j) std::swap(m(p, j), m(row, j));
        Rational inv = 1 / m(row, col);
        for (std::size_t j = 0; j < m.cols(); ++j) m(row, j) *= inv;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            if (i == row || m(i, col) == 0) continue;
            Rational f = m(i, col);
            for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) -= f * m(row, j);
        }
        pivots.push_back(col);
        ++row;
    }
    return pivots;
}

inline std::size_t rank(RMatrix m) { return rref(m).size(); }

/// Basis of the null space; each vector has a 1 in its free coordinate.
inline std::vector<RVector> nullspace(RMatrix m) {
    auto pivots = rref(m);
    std::vector<RVector> basis;
    for (std::size_t free = 0; free < m.cols(); ++free) {
        if (std::find(pivots.begin(), pivots.end(), free) != pivots.end()) continue;
        RVector v(m.cols(), Rational(0));
        v[free] = 1;
        for (std::size_t r = 0; r < pivots.size(); ++r) v[pivots[r]] = -m(r, free);
        basis.push_back(v);
    }
    return basis;
}

inline RMatrix inverse(const RMatrix& a) {
    require(a.square(), "inverse of a non-square matrix");
    std::size_t n = a.rows();
    RMatrix aug(n, 2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) aug(i, j) = a(i, j);
        aug(i, n + i) = 1;
    }
    auto pivots = rref(aug);
    if (pivots.size() < n || pivots[n - 1] != n - 1) fail(ErrorKind::precondition, "matrix is singular");
    return aug.block(0, n, n, n);
}

/// Exact solve of a square system; throws on singular matrices.
inline RVector solve(const RMatrix& a, const RVector& b) {
    require(a.square() && a.rows() == b.size(), "solve size mismatch");
    std::size_t n = a.rows();
    RMatrix aug(n, n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) aug(i, j) = a(i, j);
        aug(i, n) = b[i];
    }
    auto pivots = rref(aug);
    if (pivots.size() < n || pivots[n - 1] != n - 1) fail(ErrorKind::precondition, "matrix is singular");
    RVector x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = aug(i, n);
    return x;
}

/// Induced max-norm (largest absolute row sum), exact.
inline Rational norm_inf(const RMatrix& a) {
    Rational best = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        Rational s = 0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += abs(a(i, j));
        best = std::max(best, s);
    }
    return best;
}

inline Rational norm_inf(const RVector& v) {
    Rational best = 0;
    for (const auto& x : v) best = std::max(best, abs(x));
    return best;
}

inline Matrix<Interval> to_interval(const RMatrix& a) {
    Matrix<Interval> m(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = Interval::from_rational(a(i, j));
    return m;
}

inline Matrix<double> to_double(const RMatrix& a) {
    Matrix<double> m(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = to_double(a(i, j));
    return m;
}

/// Upper bound of the induced max-norm of an interval matrix.
inline Interval norm_inf(const Matrix<Interval>& a) {
    Interval best(0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        Interval s(0.0);
        for (std::size_t j = 0; j < a.cols(); ++j) s += abs(a(i, j));
        best = max(best, s);
    }
    return best;
}

inline bool is_zero(const RMatrix& a) {
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (a(i, j) != 0) return false;
    return true;
}

inline nlohmann::json to_json(const RMatrix& a) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < a.cols(); ++j) row.push_back(a(i, j).str());
        rows.push_back(row);
    }
    return rows;
}

inline RMatrix matrix_from_json(const nlohmann::json& j) {
    require(j.is_array() && !j.empty(), "matrix JSON must be a nonempty array of rows");
    std::size_t rows = j.size(), cols = j.at(0).size();
    RMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        require(j.at(i).is_array() && j.at(i).size() == cols, "ragged matrix JSON");
        for (std::size_t jj = 0; jj < cols; ++jj) {
            const auto& v = j.at(i).at(jj);
            m(i, jj) = v.is_string() ? parse_rational(v.get<std::string>())
                                     : parse_rational(v.dump());
        }
    }
    return m;
}

inline nlohmann::json to_json(const Interval& x) { return nlohmann::json::array({x.lo, x.hi}); }

}  // namespace cmcert
