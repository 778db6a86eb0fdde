"""Confidence-weighted ensemble of the network and textual models.

Each state's probability under either model is weighted by how close that
model's distribution is to the one-hot distribution of the state. The
combined distribution gives the prediction, and its own confidence at the
predicted state (the confidence of prediction, CoP) decides whether the
record is committed or routed to annotation.
"""
import csv
import math

import numpy as np

from attribute_fusion import log, settings
from attribute_fusion.exceptions import ValidationException
from attribute_fusion.models import (CalibrationReport, LabelSet, Metrics,
                                     PredictionOutcome)
from attribute_fusion.tbn import infer_posterior
from attribute_fusion.uts import uts_distribution

REPORT_COLUMNS = ('tau', 'pc_pct', 'pi_pct', 'np_pct', 'objective')
METRIC_COLUMNS = ('model', 'tau', 'accuracy_on_predicted', 'pc_pct',
                  'pi_pct', 'np_pct', 'overall_accuracy', 'count')


def _distribution(values, name='distribution'):
    dist = np.asarray(values, dtype=float)
    if dist.ndim != 1 or not dist.size:
        raise ValidationException(f'{name} must be a non-empty vector')
    if (dist < 0).any() or abs(dist.sum() - 1.0) > 1e-6:
        raise ValidationException(f'{name} must sum to 1, got {dist.sum()}')
    return dist


def confidence(dist, state):
    """Return the confidence of a distribution at one state, in [0, 1].

    One minus the Euclidean distance to the one-hot distribution of the
    state, clamped at zero.
    """
    dist = _distribution(dist)
    if not 0 <= state < len(dist):
        raise ValidationException(f'state {state} is out of range')
    ideal = np.zeros(len(dist))
    ideal[state] = 1.0
    return max(0.0, 1.0 - float(np.linalg.norm(dist - ideal)))


def confidences(dist):
    """Return the confidence of a distribution at every state."""
    dist = _distribution(dist)
    distances = np.linalg.norm(dist[np.newaxis, :] - np.eye(len(dist)),
                               axis=1)
    return np.maximum(1.0 - distances, 0.0)


def combine(sbm, uts):
    """Return the normalized confidence-weighted sum of two distributions.

    Falls back to the uniform distribution when every weighted term is zero.

    Raises:
        ValidationException: when the distributions differ in length.

    """
    sbm = _distribution(sbm, 'sbm distribution')
    uts = _distribution(uts, 'uts distribution')
    if sbm.shape != uts.shape:
        raise ValidationException(
            f'distributions over {len(sbm)} and {len(uts)} states')
    weighted = confidences(sbm) * sbm + confidences(uts) * uts
    total = weighted.sum()
    if total <= 0:
        return np.full(len(sbm), 1.0 / len(sbm))
    return weighted / total


def _check_tau(tau):
    if not 0 <= tau <= 1:
        raise ValidationException(f'tau must be within [0, 1], got {tau}')


def _outcome(record_id, sbm, uts, combined, tau):
    predicted = int(np.argmax(combined))
    cop = confidence(combined, predicted)
    return PredictionOutcome(record_id, sbm, uts, combined,
                             predicted=predicted, cop=cop,
                             abstained=cop <= tau)


def predict(sbm, uts, tau=settings.TAU, record_id=None):
    """Return the ensemble PredictionOutcome; abstains iff CoP <= tau."""
    _check_tau(tau)
    return _outcome(record_id, sbm, uts, combine(sbm, uts), tau)


def predict_sbm_only(sbm, uts, tau=settings.TAU, record_id=None):
    """Predict from the network posterior alone."""
    _check_tau(tau)
    return _outcome(record_id, sbm, uts, _distribution(sbm), tau)


def predict_uts_only(sbm, uts, tau=settings.TAU, record_id=None):
    """Predict from the textual distribution alone."""
    _check_tau(tau)
    return _outcome(record_id, sbm, uts, _distribution(uts), tau)


PREDICTORS = {'ensemble': predict,
              'sbm': predict_sbm_only,
              'uts': predict_uts_only}


def predict_record(bundle, record, tau=None):
    """Run both models of a bundle on one record and combine them."""
    evidence = {name: record.value(name) for name in bundle.characteristics}
    sbm = infer_posterior(bundle.net, evidence)
    uts, _ = uts_distribution(record.descriptions, bundle.spec,
                              bundle.ngram_max, bundle.temperature, record.id)
    return predict(sbm, uts, bundle.tau if tau is None else tau, record.id)


def tau_grid(step=settings.TAU_STEP):
    """Return the thresholds 0, step, 2*step, ... up to and including 1."""
    if not 0 < step <= 1:
        raise ValidationException(f'step must be within (0, 1], got {step}')
    taus = []
    index = 0
    while index * step <= 1 + 1e-9:
        taus.append(min(round(index * step, 12), 1.0))
        index += 1
    if taus[-1] < 1.0:
        taus.append(1.0)
    return taus


def _truth(outcomes, labels):
    if not outcomes:
        raise ValidationException('no outcomes to score')
    truth = []
    for outcome in outcomes:
        if outcome.record_id not in labels:
            raise ValidationException(
                f'record {outcome.record_id} has no label')
        if isinstance(labels, LabelSet):
            truth.append(labels.index_of(outcome.record_id))
        else:
            truth.append(labels[outcome.record_id])
    return np.array(truth)


def _categories(cops, correct, tau):
    committed = cops > tau
    count = len(cops)
    return (100.0 * np.count_nonzero(committed & correct) / count,
            100.0 * np.count_nonzero(committed & ~correct) / count,
            100.0 * np.count_nonzero(~committed) / count)


def _scored(outcomes, labels):
    truth = _truth(outcomes, labels)
    predicted = np.array([outcome.predicted for outcome in outcomes])
    cops = np.array([outcome.cop for outcome in outcomes], dtype=float)
    return cops, predicted == truth


def sweep(outcomes, labels, step=settings.TAU_STEP,
          lambda_pi=settings.LAMBDA_PI, lambda_np=settings.LAMBDA_NP):
    """Return one row per grid threshold with the category percentages.

    Outcomes carry the CoP they were predicted with; the threshold is
    re-applied per row, so the outcomes may come from any tau.

    Args:
        outcomes (list): PredictionOutcome objects.
        labels: LabelSet or mapping of record id -> true state index.
        step (float): grid step.
        lambda_pi, lambda_np (float): weights of the objective
            P-C - lambda_pi * P-I - lambda_np * NP.

    """
    cops, correct = _scored(outcomes, labels)
    rows = []
    for tau in tau_grid(step):
        pc_pct, pi_pct, np_pct = _categories(cops, correct, tau)
        rows.append({'tau': tau, 'pc_pct': pc_pct, 'pi_pct': pi_pct,
                     'np_pct': np_pct,
                     'objective': pc_pct - lambda_pi * pi_pct -
                     lambda_np * np_pct})
    return rows


def calibrate_tau(outcomes, labels, lambda_pi=settings.LAMBDA_PI,
                  lambda_np=settings.LAMBDA_NP, step=settings.TAU_STEP):
    """Pick the grid threshold with the highest objective, smallest on ties.

    Returns:
        CalibrationReport: every grid row and the selected tau.

    """
    rows = sweep(outcomes, labels, step, lambda_pi, lambda_np)
    best = rows[0]
    for row in rows[1:]:
        if row['objective'] > best['objective']:
            best = row
    log.info('calibrated tau=%.2f (objective %.4f)', best['tau'],
             best['objective'])
    return CalibrationReport(rows, best['tau'], lambda_pi=lambda_pi,
                             lambda_np=lambda_np, step=step)


def evaluate(outcomes, labels, tau=settings.TAU):
    """Return the Metrics of a set of outcomes at one threshold.

    Accuracy on predicted records is NaN when every record abstains.
    """
    _check_tau(tau)
    cops, correct = _scored(outcomes, labels)
    pc_pct, pi_pct, np_pct = _categories(cops, correct, tau)
    committed = pc_pct + pi_pct
    accuracy = pc_pct / committed if committed > 0 else math.nan
    return Metrics(tau, pc_pct, pi_pct, np_pct,
                   accuracy_on_predicted=accuracy,
                   overall_accuracy=float(correct.mean()),
                   count=len(outcomes))


def compare_models(outcomes, labels, tau=settings.TAU):
    """Evaluate the network alone, the text alone and the ensemble.

    Returns:
        dict: model name -> Metrics, for 'sbm', 'uts' and 'ensemble'.

    """
    comparison = {}
    for name, predictor in PREDICTORS.items():
        rescored = [predictor(outcome.sbm, outcome.uts, tau,
                              outcome.record_id) for outcome in outcomes]
        comparison[name] = evaluate(rescored, labels, tau)
    return comparison


def _cell(value):
    if isinstance(value, float):
        return f'{value:.6f}'
    return str(value)


def write_report(rows, path, columns=REPORT_COLUMNS):
    """Write report rows as delimited text with fixed float formatting."""
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, delimiter=settings.DELIMITER,
                            lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[column]) for column in columns])
