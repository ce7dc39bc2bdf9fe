#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# hfalign documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

# std imports
import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), os.path.pardir)))

# local
import hfalign

# -- General configuration ------------------------------------------------

extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.doctest',
              'sphinx.ext.intersphinx',
              'sphinx.ext.coverage',
              'sphinx.ext.viewcode']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'hfalign'
copyright = '2026, hfalign developers'
author = 'hfalign developers'

release = version = hfalign.__version__

language = 'en'
exclude_patterns = ['_build']
pygments_style = 'sphinx'
todo_include_todos = False

# documentation builders do not install torch
autodoc_mock_imports = ['torch']

# -- Options for HTML output ----------------------------------------------

html_theme = 'alabaster'
htmlhelp_basename = 'hfaligndoc'

# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'hfalign', 'hfalign Documentation',
     [author], 1)
]

intersphinx_mapping = {'python': ('https://docs.python.org/3', None),
                       'numpy': ('https://numpy.org/doc/stable', None),
                       'torch': ('https://pytorch.org/docs/stable', None)}
