#pragma once

#include "botfuse/error.hpp"
#include "botfuse/extra_trees.hpp"
#include "botfuse/features.hpp"
#include "botfuse/flow.hpp"
#include "botfuse/gcn.hpp"
#include "botfuse/graph.hpp"
#include "botfuse/metrics.hpp"
#include "botfuse/normalize.hpp"
#include "botfuse/pipeline.hpp"
#include "botfuse/pretrain.hpp"
#include "botfuse/rng.hpp"
#include "botfuse/serialize.hpp"
#include "botfuse/sweep.hpp"
#include "botfuse/synthetic.hpp"
