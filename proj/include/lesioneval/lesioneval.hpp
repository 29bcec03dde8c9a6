#pragma once

// Umbrella header for the whole library.

#include "lesioneval/agreement.hpp"
#include "lesioneval/core.hpp"
#include "lesioneval/detection.hpp"
#include "lesioneval/manifest.hpp"
#include "lesioneval/measures.hpp"
#include "lesioneval/metrics.hpp"
#include "lesioneval/nifti.hpp"
#include "lesioneval/phantom.hpp"
#include "lesioneval/pipeline.hpp"
#include "lesioneval/report.hpp"
#include "lesioneval/rng.hpp"
#include "lesioneval/stats.hpp"
#include "lesioneval/volume.hpp"
