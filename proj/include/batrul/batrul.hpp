#pragma once

#include "batrul/checkpoint.hpp"
#include "batrul/error.hpp"
#include "batrul/features.hpp"
#include "batrul/ingest.hpp"
#include "batrul/io.hpp"
#include "batrul/labeling.hpp"
#include "batrul/nn/adam.hpp"
#include "batrul/nn/autoencoder.hpp"
#include "batrul/nn/dense.hpp"
#include "batrul/nn/grad_check.hpp"
#include "batrul/nn/loss.hpp"
#include "batrul/nn/lstm.hpp"
#include "batrul/nn/tensor.hpp"
#include "batrul/pipeline.hpp"
#include "batrul/simulate.hpp"
