#pragma once

#include "onepix/attack.hpp"
#include "onepix/bench.hpp"
#include "onepix/corpus.hpp"
#include "onepix/errors.hpp"
#include "onepix/image.hpp"
#include "onepix/layers.hpp"
#include "onepix/model.hpp"
#include "onepix/parallel.hpp"
#include "onepix/rng.hpp"
#include "onepix/saliency.hpp"
#include "onepix/serialize.hpp"
#include "onepix/train.hpp"
#include "onepix/types.hpp"
