"""
Module for building policies.

This module maps policy kinds to their implementations and builds a ready-to-simulate
policy from a PolicySpec.

Functions
---------
check_feasible : function
    Raises PolicyInfeasibleError if a policy cannot run on a system/dataset pair.
build_policy : function
    Builds and prepares a policy for a set of access streams.
"""
import logging

from typing import Dict, List, Type

from clairvoyant_io.core.access import AccessStream
from clairvoyant_io.core.base_policy import BasePolicy, PolicyKind, PolicySpec
from clairvoyant_io.core.errors import ConfigError
from clairvoyant_io.core.perfmodel import DatasetModel, SystemConfig
from clairvoyant_io.core.policies.deepio import DeepIOPolicy
from clairvoyant_io.core.policies.lbann import LBANNPolicy
from clairvoyant_io.core.policies.locality_aware import LocalityAwarePolicy
from clairvoyant_io.core.policies.nopfs import NoPFSPolicy
from clairvoyant_io.core.policies.parallel_staging import ParallelStagingPolicy
from clairvoyant_io.core.policies.staging import (
    NaivePolicy,
    PerfectPolicy,
    StagingBufferPolicy,
)

logger = logging.getLogger(__name__)

POLICIES: Dict[PolicyKind, Type[BasePolicy]] = {
    PolicyKind.PERFECT: PerfectPolicy,
    PolicyKind.NAIVE: NaivePolicy,
    PolicyKind.STAGING_BUFFER: StagingBufferPolicy,
    PolicyKind.DEEPIO_ORDERED: DeepIOPolicy,
    PolicyKind.DEEPIO_OPTIMISTIC: DeepIOPolicy,
    PolicyKind.PARALLEL_STAGING: ParallelStagingPolicy,
    PolicyKind.LBANN_DYNAMIC: LBANNPolicy,
    PolicyKind.LBANN_PRELOAD: LBANNPolicy,
    PolicyKind.LOCALITY_AWARE: LocalityAwarePolicy,
    PolicyKind.NOPFS: NoPFSPolicy,
}


def check_feasible(spec: PolicySpec, cfg: SystemConfig, dataset: DatasetModel) -> None:
    """
    Check a policy against a system before any stream is generated.

    Raises
    ------
    PolicyInfeasibleError
        If the policy cannot run, e.g. LBANN with a dataset larger than aggregate RAM.
    """
    POLICIES[spec.kind].check_feasible(spec, cfg, dataset)


def build_policy(
    spec: PolicySpec,
    streams: List[AccessStream],
    cfg: SystemConfig,
    dataset: DatasetModel,
    seed: int = 0,
) -> BasePolicy:
    """
    Build a policy and prepare it for the given streams.

    Parameters
    ----------
    spec : PolicySpec
        Which policy, with its parameters.
    streams : list of AccessStream
        The original per-worker access streams.
    cfg : SystemConfig
        The simulated system.
    dataset : DatasetModel
        The dataset.
    seed : int, default=0
        Run seed, for policies that reshuffle their own access order.

    Returns
    -------
    BasePolicy
        The prepared policy.

    Raises
    ------
    ConfigError
        If the streams do not match the system or the dataset.
    PolicyInfeasibleError
        If the policy cannot run on this system.
    """
    if len(streams) != cfg.num_workers:
        raise ConfigError(f"{len(streams)} streams given for {cfg.num_workers} workers")
    for stream in streams:
        if len(stream) and int(stream.entries.max()) >= dataset.num_samples:
            raise ConfigError(f"Stream of worker {stream.worker_id} indexes past the dataset")

    check_feasible(spec, cfg, dataset)
    policy = POLICIES[spec.kind](spec, cfg, dataset, seed)
    policy.prepare(streams)
    logger.debug("Built policy %s (fill=%s)", policy.name, policy.fill_mode.value)
    return policy
