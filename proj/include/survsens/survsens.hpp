#pragma once

#include "survsens/coxph.hpp"
#include "survsens/dataset.hpp"
#include "survsens/em.hpp"
#include "survsens/ipw.hpp"
#include "survsens/latent_confounder.hpp"
#include "survsens/model.hpp"
#include "survsens/normal.hpp"
#include "survsens/probit.hpp"
#include "survsens/rng.hpp"
#include "survsens/sensgrid.hpp"
#include "survsens/simgen.hpp"
#include "survsens/stochastic_em.hpp"
