#pragma once

#include "aem/calibration.hpp"
#include "aem/checkpoint.hpp"
#include "aem/config.hpp"
#include "aem/data.hpp"
#include "aem/energy_net.hpp"
#include "aem/errors.hpp"
#include "aem/model.hpp"
#include "aem/numerics.hpp"
#include "aem/optimizer.hpp"
#include "aem/parameter_store.hpp"
#include "aem/proposal.hpp"
#include "aem/quadrature.hpp"
#include "aem/resmade.hpp"
#include "aem/rng.hpp"
#include "aem/tape.hpp"
#include "aem/trainer.hpp"
