#pragma once

#include "dbn/bridge.hpp"
#include "dbn/cost.hpp"
#include "dbn/data.hpp"
#include "dbn/distill.hpp"
#include "dbn/ensemble.hpp"
#include "dbn/error.hpp"
#include "dbn/inference.hpp"
#include "dbn/io.hpp"
#include "dbn/logits.hpp"
#include "dbn/metrics.hpp"
#include "dbn/nn/checkpoint.hpp"
#include "dbn/nn/layers.hpp"
#include "dbn/nn/optim.hpp"
#include "dbn/nn/param_store.hpp"
#include "dbn/pipeline.hpp"
#include "dbn/random.hpp"
#include "dbn/schedule.hpp"
#include "dbn/score_net.hpp"
