# infolqg documentation build configuration file.
#
# Only the settings that differ from the Sphinx defaults are listed here.

import sys, os

# The package is documented from the source tree.
sys.path.insert(0, os.path.abspath('..'))

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.doctest', 'sphinx.ext.mathjax']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'infolqg'
copyright = u'2026, infolqg developers'

# The short X.Y version.
version = '1.0'
# The full version, including alpha/beta/rc tags.
release = '1.0.0'

exclude_patterns = ['_build']
add_module_names = True
pygments_style = 'sphinx'

html_theme = 'sphinxdoc'
html_static_path = ['_static']
htmlhelp_basename = 'infolqgdoc'

latex_documents = [
  ('index', 'infolqg.tex', u'infolqg Documentation', u'infolqg developers', 'manual'),
]

man_pages = [
    ('index', 'infolqg', u'infolqg Documentation', [u'infolqg developers'], 1)
]

autodoc_member_order = 'bysource'
