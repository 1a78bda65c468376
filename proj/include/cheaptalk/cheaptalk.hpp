#pragma once

#include "cheaptalk/belief/belief.hpp"
#include "cheaptalk/belief/obl.hpp"
#include "cheaptalk/env/maze.hpp"
#include "cheaptalk/env/maze_config.hpp"
#include "cheaptalk/env/types.hpp"
#include "cheaptalk/errors.hpp"
#include "cheaptalk/harness/experiment.hpp"
#include "cheaptalk/harness/metrics.hpp"
#include "cheaptalk/learn/config.hpp"
#include "cheaptalk/learn/evaluate.hpp"
#include "cheaptalk/learn/losses.hpp"
#include "cheaptalk/learn/replay.hpp"
#include "cheaptalk/learn/trainer.hpp"
#include "cheaptalk/mi/mi_engine.hpp"
#include "cheaptalk/nn/adam.hpp"
#include "cheaptalk/nn/agent_net.hpp"
#include "cheaptalk/nn/checkpoint.hpp"
#include "cheaptalk/nn/tensor.hpp"
