#pragma once

#include <spin/tensor.hpp>
#include <spin/ops.hpp>
#include <spin/nn_ops.hpp>
#include <spin/optim.hpp>
#include <spin/gradcheck.hpp>
#include <spin/layers.hpp>
#include <spin/reasoning.hpp>
#include <spin/network.hpp>
#include <spin/losses.hpp>
#include <spin/data.hpp>
#include <spin/raster_io.hpp>
#include <spin/dataset.hpp>
#include <spin/metrics.hpp>
#include <spin/config.hpp>
#include <spin/checkpoint.hpp>
#include <spin/train.hpp>
#include <spin/gradcheck_suite.hpp>
#include <spin/commands.hpp>
