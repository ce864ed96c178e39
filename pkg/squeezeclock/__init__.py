# Squeezeclock ⏱️ AGPL-3.0 License

# project_root/
# ├── pyproject.toml
# ├── README.md
# ├── DESIGN.md
# ├── squeezeclock/
# │   ├── __init__.py
# │   ├── utils/
# │   │   ├── __init__.py
# │   │   ├── common_utils.py
# │   │   ├── config_utils.py
# │   │   └── records_utils.py
# │   ├── collective_spin.py
# │   ├── measurement_models.py
# │   ├── sequencer.py
# │   ├── analysis.py
# │   ├── simulate.py
# │   ├── report.py
# │   ├── selftest.py
# │   └── cli.py
# └── tests/
#     ├── test_collective_spin.py
#     ├── test_measurement_models.py
#     └── ...

__version__ = "0.1.0"
