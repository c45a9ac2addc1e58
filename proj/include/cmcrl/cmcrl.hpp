#pragma once

// Clustering-guided multi-layer contrastive representation learning:
// self-supervised pre-training against momentum-updated cluster centroids,
// followed by frozen-encoder linear fine-tuning.

#include "cmcrl/augment.hpp"
#include "cmcrl/checkpoint.hpp"
#include "cmcrl/cluster.hpp"
#include "cmcrl/common.hpp"
#include "cmcrl/config.hpp"
#include "cmcrl/data.hpp"
#include "cmcrl/image_io.hpp"
#include "cmcrl/loss.hpp"
#include "cmcrl/memory.hpp"
#include "cmcrl/metrics.hpp"
#include "cmcrl/model.hpp"
#include "cmcrl/nn.hpp"
#include "cmcrl/report.hpp"
#include "cmcrl/rng.hpp"
#include "cmcrl/tensor.hpp"
#include "cmcrl/train.hpp"
