#pragma once

#include "histflow/compact_set.hpp"
#include "histflow/config.hpp"
#include "histflow/couplings.hpp"
#include "histflow/diagnostics.hpp"
#include "histflow/error.hpp"
#include "histflow/experiments.hpp"
#include "histflow/lineage.hpp"
#include "histflow/model.hpp"
#include "histflow/modulus.hpp"
#include "histflow/mutation.hpp"
#include "histflow/parallel.hpp"
#include "histflow/poisson_tail.hpp"
#include "histflow/random.hpp"
#include "histflow/serialize.hpp"
#include "histflow/simulator.hpp"
#include "histflow/spine.hpp"
#include "histflow/stats.hpp"
#include "histflow/trait_space.hpp"
#include "histflow/yule.hpp"
