#pragma once

#include <string>
#include <string_view>

#include <Eigen/Core>

namespace densecorr {

enum class FeatureSource { ExternalFile, Hks, Wks, PositionalEncoding, Concat };

inline std::string_view to_string(FeatureSource s) {
    switch (s) {
        case FeatureSource::ExternalFile: return "external-file";
        case FeatureSource::Hks: return "hks";
        case FeatureSource::Wks: return "wks";
        case FeatureSource::PositionalEncoding: return "posenc";
        case FeatureSource::Concat: return "concat";
    }
    return "unknown";
}

// n x d per-vertex feature matrix plus where it came from. Rows are vertices.
struct FeatureField {
    Eigen::MatrixXd values;
    FeatureSource source = FeatureSource::ExternalFile;
    bool unit_normalized = false;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }
};

using FeatureBundle = FeatureField;

}  // namespace densecorr
