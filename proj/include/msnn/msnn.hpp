#pragma once

// Umbrella header.
#include "msnn/checkpoint.hpp"
#include "msnn/checksum.hpp"
#include "msnn/dataset.hpp"
#include "msnn/dicom.hpp"
#include "msnn/error.hpp"
#include "msnn/explain.hpp"
#include "msnn/image.hpp"
#include "msnn/knn.hpp"
#include "msnn/layers.hpp"
#include "msnn/metrics.hpp"
#include "msnn/network.hpp"
#include "msnn/parallel.hpp"
#include "msnn/rng.hpp"
#include "msnn/tensor.hpp"
#include "msnn/train.hpp"
