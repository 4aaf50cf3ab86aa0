void lookup(int n, int M[const restrict static n][n], int t[const restrict static n], int r[const restrict static n])
{
  for (int i = 0; i < n; i++)
    r[i] = M[t[i]][i];
}
