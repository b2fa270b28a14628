"""Counting models: 3-SAT, graphs with prescribed degrees, binary contingency tables"""
from models.base import CountingModel, State, gibbs_sweep, sample_uniform, score
from models.graph import DegreeInstance, GraphModel
from models.sat import CnfInstance, SatModel
from models.table import TableInstance, TableModel

__all__ = [
    'CountingModel', 'State', 'sample_uniform', 'score', 'gibbs_sweep',
    'CnfInstance', 'SatModel',
    'DegreeInstance', 'GraphModel',
    'TableInstance', 'TableModel',
]
