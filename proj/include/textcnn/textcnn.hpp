#pragma once

// Umbrella header for the whole toolkit.

#include "textcnn/adam.hpp"
#include "textcnn/arch.hpp"
#include "textcnn/autodiff.hpp"
#include "textcnn/checkpoint.hpp"
#include "textcnn/config.hpp"
#include "textcnn/dataset.hpp"
#include "textcnn/embeddings.hpp"
#include "textcnn/gradcheck.hpp"
#include "textcnn/gradcheck_suite.hpp"
#include "textcnn/layers.hpp"
#include "textcnn/model.hpp"
#include "textcnn/rng.hpp"
#include "textcnn/tensor.hpp"
#include "textcnn/tensor_ops.hpp"
#include "textcnn/train.hpp"
#include "textcnn/vocab.hpp"
