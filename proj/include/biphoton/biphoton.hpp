#pragma once

#include "biphoton/core.hpp"
#include "biphoton/crystal.hpp"
#include "biphoton/hom.hpp"
#include "biphoton/hyperhom.hpp"
#include "biphoton/io.hpp"
#include "biphoton/jsa.hpp"
#include "biphoton/pipeline.hpp"
#include "biphoton/spectra.hpp"
#include "biphoton/tofs.hpp"
#include "biphoton/tomo.hpp"
