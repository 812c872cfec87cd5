#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import numpy as np


def assert_grad_close(analytic, numeric, tol=1e-4, floor=1e-7):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    assert analytic.shape == numeric.shape
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor / tol)
    rel = np.abs(analytic - numeric) / denom
    assert rel.max() < tol, f"最大相对误差 {rel.max():.3e}"
