#pragma once

#include <Eigen/Dense>

namespace onepix {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
using Array = Eigen::Array<T, Eigen::Dynamic, 1>;

// Feature maps are stored one channel per row (row-major, so each row is a
// contiguous h*w plane with pixel index p = y*w + x).
template <class T>
using FeatMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Class probabilities, one entry per class.
template <class T>
using Probabilities = Vector<T>;

struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;

    int pixels() const { return height * width; }
    int size() const { return channels * height * width; }

    friend bool operator==(const Shape& a, const Shape& b) {
        return a.channels == b.channels && a.height == b.height && a.width == b.width;
    }
    friend bool operator!=(const Shape& a, const Shape& b) { return !(a == b); }
};

}  // namespace onepix
