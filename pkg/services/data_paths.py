# -*- coding: utf-8 -*-
from pathlib import Path

from services.config import get_settings

PROJECT_ROOT = Path(__file__).resolve().parents[1]
DATA_DIR     = get_settings().data_dir or (PROJECT_ROOT / "data")

# tabela versionada que vem com o repositório (não segue RAVG_DATA_DIR)
presets_path  = PROJECT_ROOT / "data" / "presets.csv"
results_dir   = DATA_DIR / "results"
