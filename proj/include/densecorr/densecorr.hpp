#pragma once

#include "densecorr/assignment.hpp"
#include "densecorr/descriptors.hpp"
#include "densecorr/errors.hpp"
#include "densecorr/evalbench.hpp"
#include "densecorr/features.hpp"
#include "densecorr/field.hpp"
#include "densecorr/funcmap.hpp"
#include "densecorr/geodesics.hpp"
#include "densecorr/lbfgs.hpp"
#include "densecorr/mesh.hpp"
#include "densecorr/mesh_io.hpp"
#include "densecorr/partial.hpp"
#include "densecorr/pipeline.hpp"
#include "densecorr/semantic.hpp"
#include "densecorr/spectral.hpp"
#include "densecorr/transfer.hpp"
