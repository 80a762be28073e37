#pragma once

#include "inctrl/config.hpp"
#include "inctrl/corpus.hpp"
#include "inctrl/embedding.hpp"
#include "inctrl/inference.hpp"
#include "inctrl/metrics.hpp"
#include "inctrl/prompt.hpp"
#include "inctrl/retrieval.hpp"
