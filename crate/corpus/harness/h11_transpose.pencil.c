void transpose(int n, int M[const restrict static n][n], int T[const restrict static n][n])
{
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++)
      T[j][i] = M[i][j];
}
